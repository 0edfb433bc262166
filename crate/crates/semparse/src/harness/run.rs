//! The experiment runner: builds vocabularies once per corpus, trains the
//! requested system for every (domain, seed) cell — cells run on parallel
//! workers — evaluates on the test split, and writes checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Split};
use crate::error::{HarnessError, ModelError};
use crate::harness::eval::{evaluate, BeamPredictor};
use crate::harness::report::{ResultTable, SeedResult};
use crate::harness::{RoleConfig, SystemKind, STUDENT_DEFAULT, TEACHER_DEFAULT};
use crate::model::{ModelConfig, ParserBundle, Seq2Seq};
use crate::train::{
    build_vocabs, encode_split, pretrain_then, train_supervised, ContinueWith, OptimConfig,
    RewardMode, TrainConfig, TrainInstance,
};
use crate::vocab::Vocab;

/// Everything a single experiment needs, declaratively.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Corpus directory, as written by the generator. `run_experiment`
    /// loads it; `run_experiment_on` takes a prepared corpus instead.
    pub corpus: Option<PathBuf>,
    pub system: SystemKind,
    pub teacher: RoleConfig,
    pub student: RoleConfig,
    /// Beam width for REINFORCE training, and the default for evaluation.
    pub beam_width: usize,
    /// Evaluation beam width override. Defaults to `beam_width`, except
    /// the supervised skyline which is evaluated greedily (width 1).
    pub eval_beam_width: Option<usize>,
    pub reward_mode: RewardMode,
    /// Share of the training split treated as carrying gold programs and
    /// used for supervised pretraining before the main objective.
    pub parallel_fraction: f64,
    /// Learning rate for the pretraining phase; the main phase keeps
    /// `optim.lr`. None shares the main rate.
    pub pretrain_lr: Option<f64>,
    /// Restricts the experiment to a subset of the corpus domains
    /// (training data, teachers, and evaluation alike). None means all.
    pub domains: Option<Vec<String>>,
    pub seeds: Vec<u64>,
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Distillation temperature on teacher distributions.
    pub temperature: f64,
    /// Checkpoint directory. Required by the distillation systems, which
    /// read teacher checkpoints from it.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            system: SystemKind::DistillCombined,
            teacher: TEACHER_DEFAULT,
            student: STUDENT_DEFAULT,
            beam_width: 5,
            eval_beam_width: None,
            reward_mode: RewardMode::Denotation,
            parallel_fraction: 0.0,
            pretrain_lr: None,
            domains: None,
            seeds: vec![1, 2, 3],
            optim: OptimConfig::default(),
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            temperature: 1.0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be non-empty".to_string()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::Config(format!(
                "seeds contain duplicates: {:?}",
                self.seeds
            )));
        }
        self.teacher.validate("teacher")?;
        self.student.validate("student")?;
        if !(0.0..=1.0).contains(&self.parallel_fraction) {
            return Err(HarnessError::Config(format!(
                "parallel_fraction must lie in [0, 1], got {}",
                self.parallel_fraction
            )));
        }
        if let Some(lr) = self.pretrain_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(HarnessError::Config(format!(
                    "pretrain_lr must be positive and finite, got {lr}"
                )));
            }
        }
        if let Some(domains) = &self.domains {
            if domains.is_empty() {
                return Err(HarnessError::Config(
                    "domain filter must name at least one domain".to_string(),
                ));
            }
        }
        // The step functions re-validate, but catching an unusable beam
        // width before hours of training is worth the duplication.
        let uses_reinforce = matches!(
            self.system,
            SystemKind::WeakIndependent | SystemKind::WeakCombined
        );
        if uses_reinforce && self.beam_width < 2 {
            return Err(HarnessError::Config(format!(
                "{} trains with REINFORCE and needs beam_width >= 2, got {}",
                self.system, self.beam_width
            )));
        }
        self.cell_train_config(0).validate()?;
        Ok(())
    }

    /// The per-cell training configuration: experiment-level knobs plus
    /// the cell's derived seed.
    fn cell_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optim: self.optim.clone(),
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            beam_width: self.beam_width,
            reward_mode: self.reward_mode,
            temperature: self.temperature,
            seed,
            pretrain_optim: self.pretrain_lr.map(|lr| OptimConfig { lr, ..self.optim }),
        }
    }

    fn eval_width(&self) -> usize {
        self.eval_beam_width.unwrap_or(match self.system {
            SystemKind::Supervised => 1,
            _ => self.beam_width,
        })
    }

    /// Resolves the domain filter against the corpus, keeping corpus
    /// order; unknown names are configuration errors.
    fn effective_domains(&self, all: &[String]) -> Result<Vec<String>, HarnessError> {
        let Some(filter) = &self.domains else {
            return Ok(all.to_vec());
        };
        for d in filter {
            if !all.contains(d) {
                return Err(HarnessError::Config(format!(
                    "domain `{d}` is not in the corpus (has: {})",
                    all.join(", ")
                )));
            }
        }
        Ok(all.iter().filter(|d| filter.contains(d)).cloned().collect())
    }
}

/// A corpus with its vocabularies and encoded splits, built once and
/// shared (read-only) by every cell of the experiment matrix.
pub struct PreparedCorpus {
    pub corpus: Corpus,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub train: Vec<TrainInstance>,
    pub dev: Vec<TrainInstance>,
    pub test: Vec<TrainInstance>,
    pub domains: Vec<String>,
}

impl PreparedCorpus {
    pub fn prepare(corpus: Corpus) -> Result<Self, HarnessError> {
        corpus.self_check()?;
        let (src_vocab, tgt_vocab) = build_vocabs(&corpus);
        let train = encode_split(&corpus, Split::Train, None, &src_vocab, &tgt_vocab)?;
        let dev = encode_split(&corpus, Split::Dev, None, &src_vocab, &tgt_vocab)?;
        let test = encode_split(&corpus, Split::Test, None, &src_vocab, &tgt_vocab)?;
        let domains = corpus.domains();
        Ok(PreparedCorpus {
            corpus,
            src_vocab,
            tgt_vocab,
            train,
            dev,
            test,
            domains,
        })
    }

    fn slice(set: &[TrainInstance], domain: &str) -> Vec<TrainInstance> {
        set.iter().filter(|i| i.domain == domain).cloned().collect()
    }
}

fn filter_domains(set: &[TrainInstance], domains: &[String]) -> Vec<TrainInstance> {
    set.iter()
        .filter(|i| domains.contains(&i.domain))
        .cloned()
        .collect()
}

/// Where the weak-independent run leaves each teacher, and where the
/// distillation systems look for it.
pub fn teacher_checkpoint_path(dir: &Path, domain: &str, seed: u64) -> PathBuf {
    dir.join(format!("teacher-{domain}-seed{seed}.json"))
}

/// Where every other trained model lands.
pub fn artifact_path(dir: &Path, system: SystemKind, label: &str, seed: u64) -> PathBuf {
    dir.join(format!("{system}-{label}-seed{seed}.json"))
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Decorrelates the streams that share one experiment seed (model init vs
/// training shuffles, cell vs cell). Any fixed mixing works; this one is
/// cheap and stable.
fn derive_seed(base: u64, tag: &str) -> u64 {
    fnv1a(tag) ^ base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn fresh_model(
    role: &RoleConfig,
    prep: &PreparedCorpus,
    seed: u64,
) -> Result<Seq2Seq<f64>, HarnessError> {
    let config = ModelConfig::new(
        role.num_layers,
        role.hidden_size,
        role.embed_size,
        prep.src_vocab.len(),
        prep.tgt_vocab.len(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Seq2Seq::new(config, &mut rng)?)
}

fn save_bundle(
    model: &Seq2Seq<f64>,
    prep: &PreparedCorpus,
    domains: Vec<String>,
    path: &Path,
) -> Result<(), HarnessError> {
    let bundle = ParserBundle {
        model: clone_model(model, prep)?,
        src_vocab: prep.src_vocab.clone(),
        tgt_vocab: prep.tgt_vocab.clone(),
        domains,
    };
    bundle.save(path)?;
    Ok(())
}

/// Rebuilds a value-identical model (the store is not Clone; parameters
/// carry gradient buffers that must not be shared).
fn clone_model(model: &Seq2Seq<f64>, prep: &PreparedCorpus) -> Result<Seq2Seq<f64>, HarnessError> {
    let role = RoleConfig {
        num_layers: model.config.num_layers,
        hidden_size: model.config.hidden_size,
        embed_size: model.config.embed_size,
    };
    let mut copy = fresh_model(&role, prep, 0)?;
    copy.config = model.config.clone();
    copy.params.restore_values(&model.params.snapshot_values());
    Ok(copy)
}

fn load_teacher(
    dir: &Path,
    domain: &str,
    seed: u64,
    prep: &PreparedCorpus,
) -> Result<ParserBundle<f64>, HarnessError> {
    let bundle = ParserBundle::<f64>::load(&teacher_checkpoint_path(dir, domain, seed))?;
    for (side, loaded, current) in [
        ("source", bundle.src_vocab.sha256_hex(), prep.src_vocab.sha256_hex()),
        ("target", bundle.tgt_vocab.sha256_hex(), prep.tgt_vocab.sha256_hex()),
    ] {
        if loaded != current {
            return Err(HarnessError::Model(ModelError::VocabMismatch {
                side,
                expected: loaded,
                actual: current,
            }));
        }
    }
    Ok(bundle)
}

/// Fails up front, naming every teacher checkpoint a distillation run
/// would need but cannot find.
fn require_teachers(
    cfg: &ExperimentConfig,
    domains: &[String],
) -> Result<PathBuf, HarnessError> {
    let dir = cfg.out_dir.clone().ok_or_else(|| {
        HarnessError::Config(format!(
            "{} reads teacher checkpoints and needs out_dir set",
            cfg.system
        ))
    })?;
    let mut missing = Vec::new();
    for seed in &cfg.seeds {
        for domain in domains {
            let path = teacher_checkpoint_path(&dir, domain, *seed);
            if !path.exists() {
                missing.push(path.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingInput(format!(
            "teacher checkpoints not found: {}; train them first by running \
             the weak-independent system with the same out_dir, seeds, and corpus",
            missing.join(", ")
        )));
    }
    Ok(dir)
}

/// Accuracy of a trained model on one evaluation set, grouped by domain.
fn test_accuracies(
    model: &Seq2Seq<f64>,
    data: &[TrainInstance],
    prep: &PreparedCorpus,
    width: usize,
) -> Result<BTreeMap<String, f64>, HarnessError> {
    let parser = BeamPredictor { model, width };
    let by_domain = evaluate(&parser, data, &prep.corpus.kbs, &prep.tgt_vocab)?;
    Ok(by_domain.into_iter().map(|(d, e)| (d, e.hard_pct)).collect())
}

/// One per-domain training cell (weak-independent / distill-independent).
/// Returns the trained model's accuracy on its own domain's test split.
fn run_domain_cell(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
    domain: &str,
    seed: u64,
    teacher_dir: Option<&Path>,
) -> Result<f64, HarnessError> {
    let train = PreparedCorpus::slice(&prep.train, domain);
    let dev = PreparedCorpus::slice(&prep.dev, domain);
    let test = PreparedCorpus::slice(&prep.test, domain);
    let tag = format!("{}/{domain}", cfg.system);
    let tc = cfg.cell_train_config(derive_seed(seed, &format!("train/{tag}")));
    let acc;
    match cfg.system {
        SystemKind::WeakIndependent => {
            let mut model = fresh_model(&cfg.teacher, prep, derive_seed(seed, &format!("init/{tag}")))?;
            pretrain_then(
                &mut model,
                ContinueWith::Weak,
                cfg.parallel_fraction,
                &train,
                &dev,
                &prep.corpus.kbs,
                &prep.tgt_vocab,
                &tc,
            )?;
            acc = test_accuracies(&model, &test, prep, cfg.eval_width())?
                .remove(domain)
                .expect("single-domain slice");
            if let Some(dir) = &cfg.out_dir {
                save_bundle(&model, prep, vec![domain.to_string()], &teacher_checkpoint_path(dir, domain, seed))?;
            }
        }
        SystemKind::DistillIndependent => {
            let dir = teacher_dir.expect("checked by require_teachers");
            let teacher = load_teacher(dir, domain, seed, prep)?;
            let mut teachers: BTreeMap<String, &Seq2Seq<f64>> = BTreeMap::new();
            teachers.insert(domain.to_string(), &teacher.model);
            let mut student = fresh_model(&cfg.student, prep, derive_seed(seed, &format!("init/{tag}")))?;
            pretrain_then(
                &mut student,
                ContinueWith::Distill { teachers: &teachers },
                cfg.parallel_fraction,
                &train,
                &dev,
                &prep.corpus.kbs,
                &prep.tgt_vocab,
                &tc,
            )?;
            acc = test_accuracies(&student, &test, prep, cfg.eval_width())?
                .remove(domain)
                .expect("single-domain slice");
            if let Some(out) = &cfg.out_dir {
                save_bundle(&student, prep, vec![domain.to_string()], &artifact_path(out, cfg.system, domain, seed))?;
            }
        }
        other => unreachable!("not a per-domain system: {other}"),
    }
    Ok(acc)
}

/// One pooled training cell (weak-combined / distill-combined /
/// supervised). Returns per-domain test accuracies.
#[allow(clippy::too_many_arguments)]
fn run_pooled_cell(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
    domains: &[String],
    train: &[TrainInstance],
    dev: &[TrainInstance],
    test: &[TrainInstance],
    seed: u64,
    teacher_dir: Option<&Path>,
) -> Result<BTreeMap<String, f64>, HarnessError> {
    let tag = cfg.system.to_string();
    let tc = cfg.cell_train_config(derive_seed(seed, &format!("train/{tag}")));
    let init = derive_seed(seed, &format!("init/{tag}"));
    let (model, label) = match cfg.system {
        SystemKind::WeakCombined => {
            let mut model = fresh_model(&cfg.teacher, prep, init)?;
            pretrain_then(
                &mut model,
                ContinueWith::Weak,
                cfg.parallel_fraction,
                train,
                dev,
                &prep.corpus.kbs,
                &prep.tgt_vocab,
                &tc,
            )?;
            (model, "combined")
        }
        SystemKind::DistillCombined => {
            let dir = teacher_dir.expect("checked by require_teachers");
            let bundles: Vec<ParserBundle<f64>> = domains
                .iter()
                .map(|d| load_teacher(dir, d, seed, prep))
                .collect::<Result<_, _>>()?;
            let teachers: BTreeMap<String, &Seq2Seq<f64>> = domains
                .iter()
                .zip(&bundles)
                .map(|(d, b)| (d.clone(), &b.model))
                .collect();
            let mut student = fresh_model(&cfg.student, prep, init)?;
            pretrain_then(
                &mut student,
                ContinueWith::Distill { teachers: &teachers },
                cfg.parallel_fraction,
                train,
                dev,
                &prep.corpus.kbs,
                &prep.tgt_vocab,
                &tc,
            )?;
            (student, "student")
        }
        SystemKind::Supervised => {
            let mut model = fresh_model(&cfg.student, prep, init)?;
            train_supervised(&mut model, train, dev, &tc)?;
            (model, "combined")
        }
        other => unreachable!("not a pooled system: {other}"),
    };
    let accs = test_accuracies(&model, test, prep, cfg.eval_width())?;
    if let Some(out) = &cfg.out_dir {
        save_bundle(&model, prep, domains.to_vec(), &artifact_path(out, cfg.system, label, seed))?;
    }
    Ok(accs)
}

/// Runs one system over every (domain, seed) cell of the matrix and
/// assembles the per-seed result table. Deterministic: the same config
/// and corpus produce the same table, whatever the worker count.
pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
) -> Result<ResultTable, HarnessError> {
    cfg.validate()?;
    let domains = cfg.effective_domains(&prep.domains)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Io(format!("create {}: {e}", dir.display())))?;
    }
    let teacher_dir = if cfg.system.needs_teachers() {
        Some(require_teachers(cfg, &domains)?)
    } else {
        None
    };
    let per_domain_system = matches!(
        cfg.system,
        SystemKind::WeakIndependent | SystemKind::DistillIndependent
    );
    let runs: Vec<SeedResult> = if per_domain_system {
        let cells: Vec<(u64, String)> = cfg
            .seeds
            .iter()
            .flat_map(|&s| domains.iter().map(move |d| (s, d.clone())))
            .collect();
        let accs: Vec<f64> = cells
            .par_iter()
            .map(|(seed, domain)| {
                run_domain_cell(cfg, prep, domain, *seed, teacher_dir.as_deref())
            })
            .collect::<Result<_, _>>()?;
        cfg.seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| {
                let per_domain: BTreeMap<String, f64> = domains
                    .iter()
                    .enumerate()
                    .map(|(j, d)| (d.clone(), accs[i * domains.len() + j]))
                    .collect();
                SeedResult::new(seed, per_domain)
            })
            .collect::<Result<_, _>>()?
    } else {
        let filtered = cfg.domains.as_ref().map(|_| {
            (
                filter_domains(&prep.train, &domains),
                filter_domains(&prep.dev, &domains),
                filter_domains(&prep.test, &domains),
            )
        });
        let (train, dev, test) = match &filtered {
            Some((tr, dv, te)) => (tr.as_slice(), dv.as_slice(), te.as_slice()),
            None => (&prep.train[..], &prep.dev[..], &prep.test[..]),
        };
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let accs = run_pooled_cell(
                    cfg,
                    prep,
                    &domains,
                    train,
                    dev,
                    test,
                    seed,
                    teacher_dir.as_deref(),
                )?;
                SeedResult::new(seed, accs)
            })
            .collect::<Result<_, _>>()?
    };
    ResultTable::new(cfg.system, runs)
}

/// Loads the corpus named by the config and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let path = cfg.corpus.as_ref().ok_or_else(|| {
        HarnessError::Config("config names no corpus directory".to_string())
    })?;
    let corpus = Corpus::load_dir(path)?;
    let prep = PreparedCorpus::prepare(corpus)?;
    run_experiment_on(cfg, &prep)
}

/// Runs several systems on one prepared corpus, training teachers before
/// the systems that distill from them, and returns the tables in the
/// requested order.
pub fn run_comparison(
    base: &ExperimentConfig,
    systems: &[SystemKind],
    prep: &PreparedCorpus,
) -> Result<Vec<ResultTable>, HarnessError> {
    let mut order: Vec<usize> = (0..systems.len()).collect();
    order.sort_by_key(|&i| systems[i].needs_teachers());
    let mut tables: Vec<Option<ResultTable>> = vec![None; systems.len()];
    for i in order {
        let cfg = ExperimentConfig {
            system: systems[i],
            ..base.clone()
        };
        tables[i] = Some(run_experiment_on(&cfg, prep)?);
    }
    Ok(tables.into_iter().map(|t| t.expect("all slots filled")).collect())
}
