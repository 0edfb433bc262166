//! Result aggregation and reporting: per-seed accuracy tables, seed
//! medians, a comparison grid, the pretraining-fraction series, and a
//! machine-readable JSON artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::harness::SystemKind;

/// One training/evaluation run: test hard denotation accuracy (percent)
/// per domain, plus their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub per_domain: BTreeMap<String, f64>,
    pub average: f64,
}

impl SeedResult {
    pub fn new(seed: u64, per_domain: BTreeMap<String, f64>) -> Result<Self, HarnessError> {
        if per_domain.is_empty() {
            return Err(HarnessError::Report(format!(
                "seed {seed}: no domain accuracies"
            )));
        }
        for (domain, acc) in &per_domain {
            if !(0.0..=100.0).contains(acc) {
                return Err(HarnessError::Report(format!(
                    "seed {seed}: accuracy {acc} for {domain} outside [0, 100]"
                )));
            }
        }
        let average = per_domain.values().sum::<f64>() / per_domain.len() as f64;
        Ok(SeedResult { seed, per_domain, average })
    }

    fn check(&self) -> Result<(), HarnessError> {
        let recomputed = Self::new(self.seed, self.per_domain.clone())?;
        if (recomputed.average - self.average).abs() > 1e-9 {
            return Err(HarnessError::Report(format!(
                "seed {}: stored average {} but domain mean is {}",
                self.seed, self.average, recomputed.average
            )));
        }
        Ok(())
    }
}

/// All seeds of one system on one corpus. The aggregate row is the
/// per-domain median over seeds; its average column is the unweighted
/// mean of those medians, so the mean-of-domains invariant holds for
/// every row of the rendered table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub system: SystemKind,
    pub runs: Vec<SeedResult>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

impl ResultTable {
    pub fn new(system: SystemKind, runs: Vec<SeedResult>) -> Result<Self, HarnessError> {
        let table = ResultTable { system, runs };
        table.check()?;
        Ok(table)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.runs.is_empty() {
            return Err(HarnessError::Report(format!(
                "{}: result table has no runs",
                self.system
            )));
        }
        let domains = self.domains();
        for run in &self.runs {
            run.check()?;
            let run_domains: Vec<&String> = run.per_domain.keys().collect();
            if run_domains != domains.iter().collect::<Vec<_>>() {
                return Err(HarnessError::Report(format!(
                    "{}: seed {} covers domains {run_domains:?}, expected {domains:?}",
                    self.system, run.seed
                )));
            }
        }
        Ok(())
    }

    pub fn domains(&self) -> Vec<String> {
        self.runs
            .first()
            .map(|r| r.per_domain.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Median accuracy over seeds for one domain.
    pub fn median_for(&self, domain: &str) -> Option<f64> {
        let xs: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.per_domain.get(domain).copied())
            .collect();
        if xs.len() != self.runs.len() {
            return None;
        }
        Some(median(xs))
    }

    /// The aggregate row: per-domain medians and their unweighted mean.
    pub fn aggregate(&self) -> (BTreeMap<String, f64>, f64) {
        let per_domain: BTreeMap<String, f64> = self
            .domains()
            .into_iter()
            .map(|d| {
                let m = self.median_for(&d).expect("checked domain coverage");
                (d, m)
            })
            .collect();
        let avg = per_domain.values().sum::<f64>() / per_domain.len() as f64;
        (per_domain, avg)
    }

    /// Median of the per-seed average column (the headline number for
    /// system-ordering comparisons).
    pub fn median_average(&self) -> f64 {
        median(self.runs.iter().map(|r| r.average).collect())
    }
}

fn shared_domains(tables: &[ResultTable]) -> Result<Vec<String>, HarnessError> {
    let first = tables
        .first()
        .ok_or_else(|| HarnessError::Report("no tables to report".to_string()))?;
    let domains = first.domains();
    for t in tables {
        t.check()?;
        if t.domains() != domains {
            return Err(HarnessError::Report(format!(
                "domain sets differ: {} has {:?}, {} has {:?}",
                first.system,
                domains,
                t.system,
                t.domains()
            )));
        }
    }
    Ok(domains)
}

/// The comparison grid: one row per system, one column per domain plus
/// the average, all cells the median over seeds.
pub fn render_grid(tables: &[ResultTable]) -> Result<String, HarnessError> {
    let domains = shared_domains(tables)?;
    let mut out = String::new();
    let name_w = tables
        .iter()
        .map(|t| t.system.to_string().len())
        .max()
        .unwrap()
        .max("system".len());
    let col_w = domains.iter().map(|d| d.len()).max().unwrap().max(7);
    write!(out, "{:name_w$}", "system").unwrap();
    for d in &domains {
        write!(out, "  {d:>col_w$}").unwrap();
    }
    writeln!(out, "  {:>col_w$}", "average").unwrap();
    for t in tables {
        let (per_domain, avg) = t.aggregate();
        write!(out, "{:name_w$}", t.system.to_string()).unwrap();
        for d in &domains {
            write!(out, "  {:>col_w$.1}", per_domain[d]).unwrap();
        }
        writeln!(out, "  {avg:>col_w$.1}").unwrap();
    }
    Ok(out)
}

/// The pretraining-fraction series: accuracy per domain as the parallel
/// fraction grows, one line per fraction.
pub fn render_fraction_series(points: &[(f64, ResultTable)]) -> Result<String, HarnessError> {
    let tables: Vec<ResultTable> = points.iter().map(|(_, t)| t.clone()).collect();
    let domains = shared_domains(&tables)?;
    let mut out = String::new();
    write!(out, "{:>8}", "fraction").unwrap();
    let col_w = domains.iter().map(|d| d.len()).max().unwrap().max(7);
    for d in &domains {
        write!(out, "  {d:>col_w$}").unwrap();
    }
    writeln!(out, "  {:>col_w$}", "average").unwrap();
    for (fraction, table) in points {
        let (per_domain, avg) = table.aggregate();
        write!(out, "{fraction:>8.2}").unwrap();
        for d in &domains {
            write!(out, "  {:>col_w$.1}", per_domain[d]).unwrap();
        }
        writeln!(out, "  {avg:>col_w$.1}").unwrap();
    }
    Ok(out)
}

/// The machine-readable artifact: tables exactly as measured, plus the
/// aggregate rows recomputed here so downstream checks need no math.
pub fn tables_to_json(tables: &[ResultTable]) -> Result<serde_json::Value, HarnessError> {
    shared_domains(tables)?;
    let entries: Vec<serde_json::Value> = tables
        .iter()
        .map(|t| {
            let (per_domain, avg) = t.aggregate();
            serde_json::json!({
                "system": t.system,
                "runs": t.runs,
                "aggregate": { "per_domain": per_domain, "average": avg },
            })
        })
        .collect();
    Ok(serde_json::json!({ "tables": entries }))
}

/// Reads back what `tables_to_json` wrote; aggregate rows are recomputed
/// and must agree with the stored ones.
pub fn tables_from_json(value: &serde_json::Value) -> Result<Vec<ResultTable>, HarnessError> {
    let entries = value
        .get("tables")
        .and_then(|t| t.as_array())
        .ok_or_else(|| HarnessError::Report("missing `tables` array".to_string()))?;
    let mut tables = Vec::new();
    for entry in entries {
        let system: SystemKind =
            serde_json::from_value(entry.get("system").cloned().ok_or_else(|| {
                HarnessError::Report("table entry missing `system`".to_string())
            })?)
            .map_err(|e| HarnessError::Report(format!("bad system: {e}")))?;
        let runs: Vec<SeedResult> =
            serde_json::from_value(entry.get("runs").cloned().ok_or_else(|| {
                HarnessError::Report("table entry missing `runs`".to_string())
            })?)
            .map_err(|e| HarnessError::Report(format!("bad runs: {e}")))?;
        let table = ResultTable::new(system, runs)?;
        if let Some(stored) = entry.get("aggregate").and_then(|a| a.get("average")) {
            let stored = stored.as_f64().ok_or_else(|| {
                HarnessError::Report("aggregate average is not a number".to_string())
            })?;
            let (_, avg) = table.aggregate();
            if (stored - avg).abs() > 1e-9 {
                return Err(HarnessError::Report(format!(
                    "{}: stored aggregate average {stored} but recomputed {avg}",
                    table.system
                )));
            }
        }
        tables.push(table);
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u64, accs: &[(&str, f64)]) -> SeedResult {
        SeedResult::new(
            seed,
            accs.iter().map(|(d, a)| (d.to_string(), *a)).collect(),
        )
        .unwrap()
    }

    fn table(system: SystemKind, rows: &[SeedResult]) -> ResultTable {
        ResultTable::new(system, rows.to_vec()).unwrap()
    }

    #[test]
    fn average_is_the_unweighted_domain_mean() {
        let r = run(1, &[("a", 10.0), ("b", 20.0), ("c", 60.0)]);
        assert_eq!(r.average, 30.0);
        let mut bad = r.clone();
        bad.average = 31.0;
        assert!(bad.check().is_err());
        assert!(SeedResult::new(2, BTreeMap::new()).is_err());
        let oob = SeedResult::new(3, [("a".to_string(), 101.0)].into_iter().collect());
        assert!(oob.is_err());
    }

    #[test]
    fn medians_handle_odd_and_even_seed_counts() {
        let t = table(
            SystemKind::Supervised,
            &[
                run(1, &[("a", 10.0)]),
                run(2, &[("a", 50.0)]),
                run(3, &[("a", 20.0)]),
            ],
        );
        assert_eq!(t.median_for("a"), Some(20.0));
        assert_eq!(t.median_average(), 20.0);
        let t = table(
            SystemKind::Supervised,
            &[run(1, &[("a", 10.0)]), run(2, &[("a", 50.0)])],
        );
        assert_eq!(t.median_for("a"), Some(30.0));
    }

    #[test]
    fn aggregate_average_is_mean_of_domain_medians() {
        let t = table(
            SystemKind::WeakIndependent,
            &[
                run(1, &[("a", 10.0), ("b", 30.0)]),
                run(2, &[("a", 20.0), ("b", 70.0)]),
                run(3, &[("a", 90.0), ("b", 50.0)]),
            ],
        );
        let (per_domain, avg) = t.aggregate();
        assert_eq!(per_domain["a"], 20.0);
        assert_eq!(per_domain["b"], 50.0);
        assert_eq!(avg, 35.0);
    }

    #[test]
    fn mismatched_domain_sets_are_rejected() {
        let t1 = table(SystemKind::Supervised, &[run(1, &[("a", 10.0)])]);
        let t2 = table(SystemKind::WeakCombined, &[run(1, &[("b", 10.0)])]);
        let err = render_grid(&[t1.clone(), t2]).unwrap_err();
        assert!(err.to_string().contains("domain sets differ"), "{err}");
        let ragged = ResultTable {
            system: SystemKind::Supervised,
            runs: vec![run(1, &[("a", 1.0)]), run(2, &[("a", 1.0), ("b", 2.0)])],
        };
        assert!(ragged.check().is_err());
        let _ = t1;
    }

    #[test]
    fn grid_contains_every_system_and_domain() {
        let tables = vec![
            table(
                SystemKind::WeakIndependent,
                &[run(1, &[("recipes", 35.0), ("books", 40.0)])],
            ),
            table(
                SystemKind::DistillCombined,
                &[run(1, &[("recipes", 42.0), ("books", 44.0)])],
            ),
        ];
        let grid = render_grid(&tables).unwrap();
        for needle in ["weak-independent", "distill-combined", "recipes", "books", "average"] {
            assert!(grid.contains(needle), "missing {needle} in:\n{grid}");
        }
        assert_eq!(grid.lines().count(), 3);
    }

    #[test]
    fn fraction_series_renders_one_line_per_fraction() {
        let points = vec![
            (0.0, table(SystemKind::WeakIndependent, &[run(1, &[("a", 10.0)])])),
            (0.1, table(SystemKind::WeakIndependent, &[run(1, &[("a", 15.0)])])),
            (0.3, table(SystemKind::WeakIndependent, &[run(1, &[("a", 25.0)])])),
        ];
        let s = render_fraction_series(&points).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.contains("0.30"));
    }

    #[test]
    fn json_round_trips_without_loss() {
        let tables = vec![
            table(
                SystemKind::Supervised,
                &[
                    run(1, &[("a", 96.5), ("b", 97.25)]),
                    run(2, &[("a", 95.0), ("b", 98.125)]),
                    run(3, &[("a", 97.0), ("b", 96.0)]),
                ],
            ),
            table(SystemKind::WeakCombined, &[run(1, &[("a", 2.0), ("b", 3.0)])]),
        ];
        let json = tables_to_json(&tables).unwrap();
        let back = tables_from_json(&json).unwrap();
        assert_eq!(back, tables);

        let mut tampered = json.clone();
        tampered["tables"][0]["aggregate"]["average"] = serde_json::json!(12.0);
        assert!(tables_from_json(&tampered).is_err());
    }
}
