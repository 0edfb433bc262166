//! Experiment orchestration: the five-system comparison (per-domain weak
//! teachers, a pooled weak model, per-domain and unified distilled
//! students, and a supervised skyline), its evaluation protocol, and
//! result reporting.

pub mod eval;
pub mod report;
pub mod run;

pub use eval::{evaluate, BeamPredictor, DomainEval, EvalRecord, FixedSequence, GoldReplay, Predict};
pub use report::{
    render_fraction_series, render_grid, tables_from_json, tables_to_json, ResultTable, SeedResult,
};
pub use run::{
    artifact_path, run_comparison, run_experiment, run_experiment_on, teacher_checkpoint_path,
    ExperimentConfig, PreparedCorpus,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// The five systems under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// One REINFORCE teacher per domain, each evaluated on its own domain.
    WeakIndependent,
    /// A single REINFORCE model trained on all domains pooled.
    WeakCombined,
    /// Per-domain students, each distilled from that domain's teacher.
    DistillIndependent,
    /// One unified student distilled from every teacher at once.
    DistillCombined,
    /// Trained on gold programs; the accuracy ceiling.
    Supervised,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] = [
        SystemKind::WeakIndependent,
        SystemKind::WeakCombined,
        SystemKind::DistillIndependent,
        SystemKind::DistillCombined,
        SystemKind::Supervised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::WeakIndependent => "weak-independent",
            SystemKind::WeakCombined => "weak-combined",
            SystemKind::DistillIndependent => "distill-independent",
            SystemKind::DistillCombined => "distill-combined",
            SystemKind::Supervised => "supervised",
        }
    }

    /// Whether this system consumes teacher checkpoints.
    pub fn needs_teachers(self) -> bool {
        matches!(
            self,
            SystemKind::DistillIndependent | SystemKind::DistillCombined
        )
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "unknown system `{s}` (expected one of: {})",
                    SystemKind::ALL.map(|k| k.as_str()).join(", ")
                ))
            })
    }
}

/// Architecture knobs for one model role (teachers vs the student).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
}

impl RoleConfig {
    pub fn validate(&self, role: &str) -> Result<(), HarnessError> {
        if self.num_layers == 0 || self.hidden_size == 0 || self.embed_size == 0 {
            return Err(HarnessError::Config(format!(
                "{role} model dimensions must all be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Default teacher architecture: a single-layer parser per domain.
pub const TEACHER_DEFAULT: RoleConfig = RoleConfig {
    num_layers: 1,
    hidden_size: 300,
    embed_size: 100,
};

/// Default student architecture: two layers, hidden size 300.
pub const STUDENT_DEFAULT: RoleConfig = RoleConfig {
    num_layers: 2,
    hidden_size: 300,
    embed_size: 100,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_names_round_trip() {
        for kind in SystemKind::ALL {
            assert_eq!(kind.as_str().parse::<SystemKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{kind}\""));
            assert_eq!(serde_json::from_str::<SystemKind>(&json).unwrap(), kind);
        }
        assert!("weak_independent".parse::<SystemKind>().is_err());
    }

    #[test]
    fn teacher_consumption_matches_system_semantics() {
        assert!(SystemKind::DistillCombined.needs_teachers());
        assert!(SystemKind::DistillIndependent.needs_teachers());
        assert!(!SystemKind::WeakIndependent.needs_teachers());
        assert!(!SystemKind::Supervised.needs_teachers());
    }

    #[test]
    fn role_config_rejects_zero_dimensions() {
        let bad = RoleConfig { num_layers: 0, hidden_size: 4, embed_size: 4 };
        assert!(bad.validate("teacher").is_err());
        assert!(TEACHER_DEFAULT.validate("teacher").is_ok());
        assert_eq!(STUDENT_DEFAULT.num_layers, 2);
        assert_eq!(STUDENT_DEFAULT.hidden_size, 300);
    }
}
