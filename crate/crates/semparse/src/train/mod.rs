//! Training procedures: supervised teacher forcing, weakly-supervised
//! policy-gradient over beams, and teacher-to-student distillation, plus the
//! epoch drivers that wrap them with shuffling, validation, and early
//! stopping.

pub mod distill;
pub mod driver;
pub mod reinforce;
pub mod supervised;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::params::{DEFAULT_DECAY, DEFAULT_EPS, DEFAULT_LEARNING_RATE};
use crate::data::{Corpus, Instance, Split};
use crate::error::TrainError;
use crate::lang::Denotation;
use crate::vocab::{TokenId, Vocab, EOS};

pub use distill::{distill_loss, distill_step, export_traces, teacher_trace, TeacherTrace};
pub use driver::{
    denotation_accuracy, pretrain_then, train_distill, train_supervised, train_weak, ContinueWith,
};
pub use reinforce::{reinforce_step, RewardRecord, ScoredHyp};
pub use supervised::{supervised_loss, supervised_step};

/// RMSprop hyperparameters shared by all three trainers.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: DEFAULT_LEARNING_RATE,
            decay: DEFAULT_DECAY,
            eps: DEFAULT_EPS,
        }
    }
}

/// How a decoded hypothesis is scored during weakly-supervised training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Execute the hypothesis and score the denotation's balanced F1
    /// against the gold denotation; unparseable or failing programs get 0.
    Denotation,
    /// Exact token match against the gold program (diagnostic mode).
    StringMatch,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::Denotation => "denotation",
            RewardMode::StringMatch => "string-match",
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardMode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "denotation" => Ok(RewardMode::Denotation),
            "string-match" => Ok(RewardMode::StringMatch),
            other => Err(TrainError::Config(format!(
                "unknown reward mode `{other}` (expected denotation or string-match)"
            ))),
        }
    }
}

/// Knobs for the epoch drivers. One evaluation happens per epoch; early
/// stopping triggers after `patience` evaluations without improvement.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Beam width for the policy-gradient trainer (must be ≥ 2).
    pub beam_width: usize,
    pub reward_mode: RewardMode,
    /// Softmax temperature applied to teacher logits when tracing.
    pub temperature: f64,
    /// Seed for batch shuffling.
    pub seed: u64,
    /// Optimizer for the supervised pretraining phase only. The phases want
    /// different step sizes: pretraining has to move far fast, while the
    /// objective that follows fine-tunes and is wrecked by large steps.
    /// None shares `optim`.
    pub pretrain_optim: Option<OptimConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optim: OptimConfig::default(),
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            beam_width: 5,
            reward_mode: RewardMode::Denotation,
            temperature: 1.0,
            seed: 0,
            pretrain_optim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be ≥ 1".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be ≥ 1".to_string()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be ≥ 1".to_string()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(TrainError::Config(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A corpus instance encoded to token ids, ready for any of the trainers.
/// `program` ends with the end-of-sequence id; weak training never reads it
/// unless the reward mode is string-match.
#[derive(Clone, Debug)]
pub struct TrainInstance {
    pub id: String,
    pub domain: String,
    pub src: Vec<TokenId>,
    pub program: Option<Vec<TokenId>>,
    pub denotation: Denotation,
    pub entity_map: BTreeMap<String, String>,
}

/// Builds the (source, target) vocabulary pair for a corpus: source words
/// come from the training utterances only, target tokens from the knowledge
/// bases' schemas.
pub fn build_vocabs(corpus: &Corpus) -> (Vocab, Vocab) {
    let src = Vocab::source_from_utterances(
        corpus.split(Split::Train).iter().map(|i| i.utterance.as_slice()),
    );
    let tgt = Vocab::target_from_kbs(corpus.kbs.values());
    (src, tgt)
}

/// Encodes one instance. Source words outside the vocabulary fall back to
/// the unknown token; a program token outside the target vocabulary is a
/// contract violation (the target vocabulary is schema-derived and must
/// cover every generable program).
pub fn encode_instance(
    inst: &Instance,
    id: String,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<TrainInstance, TrainError> {
    let src = src_vocab.encode_with_unk(&inst.utterance);
    let mut program = tgt_vocab.encode_exact(&inst.program).ok_or_else(|| {
        TrainError::Contract(format!(
            "instance {id}: program token outside the target vocabulary in `{}`",
            inst.program.join(" ")
        ))
    })?;
    let eos = tgt_vocab
        .eos()
        .ok_or_else(|| TrainError::Contract("target vocabulary lacks end-of-sequence".to_string()))?;
    program.push(eos);
    Ok(TrainInstance {
        id,
        domain: inst.domain.clone(),
        src,
        program: Some(program),
        denotation: inst.denotation.clone(),
        entity_map: inst.entity_map.clone(),
    })
}

/// Encodes a whole corpus split, optionally restricted to one domain.
/// Instance ids are `{domain}/{split}[{index}]` with the index taken from
/// the split's storage order, so they are stable across runs.
pub fn encode_split(
    corpus: &Corpus,
    split: Split,
    domain: Option<&str>,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<Vec<TrainInstance>, TrainError> {
    let mut out = Vec::new();
    for (i, inst) in corpus.split(split).iter().enumerate() {
        if let Some(d) = domain {
            if inst.domain != d {
                continue;
            }
        }
        let id = format!("{}/{}[{i}]", inst.domain, split.as_str());
        out.push(encode_instance(inst, id, src_vocab, tgt_vocab)?);
    }
    Ok(out)
}

/// Decodes target-token ids back to program words, excluding the trailing
/// end-of-sequence marker if present.
pub fn decode_program(tokens: &[TokenId], tgt_vocab: &Vocab) -> Vec<String> {
    let body = match tokens.last() {
        Some(&t) if tgt_vocab.token(t) == EOS => &tokens[..tokens.len() - 1],
        _ => tokens,
    };
    tgt_vocab.decode(body)
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Append-only training log; serializes to `step,split,metric,value` CSV.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, step: u64, split: &str, metric: &str, value: f64) {
        self.rows.push(LogRow {
            step,
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }

    /// Last logged value for a (split, metric) pair.
    pub fn last(&self, split: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,split,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.step, r.split, r.metric, r.value));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut f = std::fs::File::create(path)
            .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}
