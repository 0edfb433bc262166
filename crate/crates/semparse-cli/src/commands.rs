//! Command implementations. Every artifact-producing command resolves its
//! configuration (defaults ← config file ← flags), writes the artifacts
//! plus a resolved-config snapshot next to them, and logs progress to the
//! error stream only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use semparse::data::{
    corpus_stats, default_bundle, generate_corpus, load_bundle, normalize_external, Corpus,
};
use semparse::error::{DataError, HarnessError, ModelError, TrainError};
use semparse::harness::{
    evaluate, render_fraction_series, render_grid, run_experiment_on, tables_to_json,
    teacher_checkpoint_path, BeamPredictor, ExperimentConfig, PreparedCorpus, ResultTable,
    SeedResult, SystemKind,
};
use semparse::model::ParserBundle;

use crate::config::merge_overrides;

/// A failure with its process exit code and machine-parseable category.
pub struct CliError {
    pub code: i32,
    pub category: &'static str,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, category: "config", msg: msg.into() }
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        CliError { code: 3, category: "missing-input", msg: msg.into() }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError { code: 4, category: "internal", msg: msg.into() }
    }
}

impl From<HarnessError> for CliError {
    fn from(err: HarnessError) -> Self {
        let msg = err.to_string();
        match &err {
            HarnessError::Config(_) | HarnessError::Report(_) => CliError::config(msg),
            HarnessError::MissingInput(_) | HarnessError::Io(_) => CliError::missing(msg),
            HarnessError::Data(d) => classify_data(d, msg),
            HarnessError::Model(m) => classify_model(m, msg),
            HarnessError::Train(t) => match t {
                TrainError::Config(_) => CliError::config(msg),
                TrainError::Io(_) => CliError::missing(msg),
                TrainError::Model(m) => classify_model(m, msg),
                _ => CliError::internal(msg),
            },
        }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        let msg = err.to_string();
        classify_data(&err, msg)
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        let msg = err.to_string();
        classify_model(&err, msg)
    }
}

fn classify_data(err: &DataError, msg: String) -> CliError {
    match err {
        DataError::Io(_) => CliError::missing(msg),
        DataError::Inconsistent { .. } => CliError::internal(msg),
        _ => CliError::config(msg),
    }
}

fn classify_model(err: &ModelError, msg: String) -> CliError {
    match err {
        // Checkpoints that cannot be read or do not fit the corpus are
        // input problems, not configuration mistakes.
        ModelError::CheckpointIo(_) | ModelError::VocabMismatch { .. } => CliError::missing(msg),
        ModelError::Config(_) => CliError::config(msg),
        _ => CliError::internal(msg),
    }
}

/// Default document ← config file (nested or dotted keys) → typed config.
/// `strip` names keys the caller handles itself (extracted and removed
/// before the merge so the typed schema stays strict).
fn resolve_config<T: Serialize + DeserializeOwned>(
    default: &T,
    config_path: Option<&Path>,
    strip: &[&str],
) -> Result<(T, BTreeMap<String, Value>), CliError> {
    let mut doc = serde_json::to_value(default)
        .map_err(|e| CliError::internal(format!("encoding defaults: {e}")))?;
    let mut stripped = BTreeMap::new();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing(format!("config {}: {e}", path.display())))?;
        let mut patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
        if let Some(obj) = patch.as_object_mut() {
            for key in strip {
                if let Some(v) = obj.remove(*key) {
                    stripped.insert(key.to_string(), v);
                }
            }
        }
        merge_overrides(&mut doc, &patch).map_err(CliError::config)?;
    }
    let typed = serde_json::from_value(doc)
        .map_err(|e| CliError::config(format!("config does not fit the schema: {e}")))?;
    Ok((typed, stripped))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("encoding {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::missing(format!("writing {}: {e}", path.display())))
}

fn snapshot_config<T: Serialize>(path: &Path, config: &T) -> Result<(), CliError> {
    let value = serde_json::to_value(config)
        .map_err(|e| CliError::internal(format!("encoding snapshot: {e}")))?;
    write_json(path, &value)
}

// ---------------------------------------------------------------- gen-data

#[derive(Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub spec: String,
    pub per_domain: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { spec: "default".to_string(), per_domain: 300, seed: 1, out: None }
    }
}

pub struct GenFlags {
    pub spec: Option<String>,
    pub per_domain: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn gen_data(flags: GenFlags, config_path: Option<&Path>) -> Result<(), CliError> {
    let started = Instant::now();
    let (mut cfg, _) = resolve_config(&GenConfig::default(), config_path, &[])?;
    if let Some(v) = flags.spec {
        cfg.spec = v;
    }
    if let Some(v) = flags.per_domain {
        cfg.per_domain = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.out {
        cfg.out = Some(v);
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::config("gen-data needs --out (or `out` in the config)"))?;
    let bundle = if cfg.spec == "default" {
        default_bundle()
    } else {
        load_bundle(Path::new(&cfg.spec))?
    };
    eprintln!(
        "[gen-data] generating {} instances/domain across {} domains (seed {})",
        cfg.per_domain,
        bundle.len(),
        cfg.seed
    );
    let corpus = generate_corpus(&bundle, cfg.per_domain, cfg.seed)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::missing(format!("creating {}: {e}", out.display())))?;
    corpus.save_dir(&out)?;
    let stats = corpus_stats(&corpus);
    let stats_value = serde_json::to_value(&stats)
        .map_err(|e| CliError::internal(format!("encoding stats: {e}")))?;
    write_json(&out.join("stats.json"), &stats_value)?;
    snapshot_config(&out.join("gen-data-config.json"), &cfg)?;
    eprintln!(
        "[gen-data] wrote corpus, stats.json, and gen-data-config.json to {} in {:.1}s",
        out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// ------------------------------------------------------------ experiments

/// Flags shared by the training-style commands.
pub struct RunFlags {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub domain: Option<String>,
    pub beam_width: Option<usize>,
    pub reward_mode: Option<String>,
    pub parallel_fraction: Option<f64>,
}

fn resolve_experiment(
    default_system: SystemKind,
    flags: &RunFlags,
    config_path: Option<&Path>,
    strip: &[&str],
) -> Result<(ExperimentConfig, BTreeMap<String, Value>), CliError> {
    let default = ExperimentConfig {
        system: default_system,
        ..ExperimentConfig::default()
    };
    let (mut cfg, stripped) = resolve_config(&default, config_path, strip)?;
    if let Some(v) = &flags.corpus {
        cfg.corpus = Some(v.clone());
    }
    if let Some(v) = &flags.out {
        cfg.out_dir = Some(v.clone());
    }
    if let Some(v) = flags.seed {
        cfg.seeds = vec![v];
    }
    if let Some(v) = &flags.domain {
        cfg.domains = Some(vec![v.clone()]);
    }
    if let Some(v) = flags.beam_width {
        cfg.beam_width = v;
    }
    if let Some(v) = &flags.reward_mode {
        cfg.reward_mode = v
            .parse()
            .map_err(|e: TrainError| CliError::config(e.to_string()))?;
    }
    if let Some(v) = flags.parallel_fraction {
        cfg.parallel_fraction = v;
    }
    Ok((cfg, stripped))
}

fn load_prepared(cfg: &ExperimentConfig) -> Result<PreparedCorpus, CliError> {
    let path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::config("no corpus given (--corpus or `corpus` in the config)"))?;
    let corpus = Corpus::load_dir(path)?;
    Ok(PreparedCorpus::prepare(corpus)?)
}

fn result_value(cfg: &ExperimentConfig, run: &SeedResult) -> Value {
    json!({
        "system": cfg.system,
        "seed": run.seed,
        "per_domain": run.per_domain,
        "average": run.average,
        "parallel_fraction": cfg.parallel_fraction,
    })
}

/// Runs the experiment described by `cfg` and writes one result JSON per
/// seed plus the resolved-config snapshot (with `extra` keys attached).
fn run_and_report(
    cfg: &ExperimentConfig,
    extra_snapshot: &BTreeMap<String, Value>,
) -> Result<ResultTable, CliError> {
    let started = Instant::now();
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::config("no output directory (--out or `out_dir` in the config)"))?;
    let prep = load_prepared(cfg)?;
    eprintln!(
        "[{}] corpus: {} domains, {} train / {} dev / {} test instances",
        cfg.system,
        prep.domains.len(),
        prep.train.len(),
        prep.dev.len(),
        prep.test.len()
    );
    let table = run_experiment_on(cfg, &prep)?;
    for run in &table.runs {
        let path = out.join(format!("{}-seed{}-result.json", cfg.system, run.seed));
        write_json(&path, &result_value(cfg, run))?;
        eprintln!(
            "[{}] seed {}: average test accuracy {:.1}%",
            cfg.system, run.seed, run.average
        );
    }
    let mut snapshot = serde_json::to_value(cfg)
        .map_err(|e| CliError::internal(format!("encoding snapshot: {e}")))?;
    if let Some(obj) = snapshot.as_object_mut() {
        for (k, v) in extra_snapshot {
            obj.insert(k.clone(), v.clone());
        }
    }
    write_json(&out.join(format!("{}-config.json", cfg.system)), &snapshot)?;
    eprintln!(
        "[{}] finished in {:.1}s; artifacts in {}",
        cfg.system,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(table)
}

pub fn train_teacher(flags: RunFlags, config_path: Option<&Path>) -> Result<(), CliError> {
    let (cfg, _) = resolve_experiment(SystemKind::WeakIndependent, &flags, config_path, &[])?;
    run_and_report(&cfg, &BTreeMap::new())?;
    Ok(())
}

pub fn train_combined(flags: RunFlags, config_path: Option<&Path>) -> Result<(), CliError> {
    let (cfg, _) = resolve_experiment(SystemKind::WeakCombined, &flags, config_path, &[])?;
    run_and_report(&cfg, &BTreeMap::new())?;
    Ok(())
}

pub fn distill(
    flags: RunFlags,
    teachers_flag: Option<&str>,
    config_path: Option<&Path>,
) -> Result<(), CliError> {
    let (cfg, stripped) =
        resolve_experiment(SystemKind::DistillCombined, &flags, config_path, &["teachers"])?;
    if !cfg.system.needs_teachers() {
        return Err(CliError::config(format!(
            "distill runs a distillation system, got `{}`",
            cfg.system
        )));
    }
    let mut teacher_paths: Vec<PathBuf> = Vec::new();
    if let Some(list) = teachers_flag {
        teacher_paths = list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect();
    } else if let Some(v) = stripped.get("teachers") {
        teacher_paths = serde_json::from_value(v.clone())
            .map_err(|e| CliError::config(format!("`teachers` in config: {e}")))?;
    }
    if teacher_paths.is_empty() {
        return Err(CliError::config(
            "no teachers given (--teachers a.json,b.json or `teachers` in the config)",
        ));
    }
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::config("no output directory (--out or `out_dir` in the config)"))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::missing(format!("creating {}: {e}", out.display())))?;

    // Import the named teacher files into the checkpoint layout the
    // experiment runner reads, one copy per experiment seed.
    let mut covered = Vec::new();
    for path in &teacher_paths {
        let bundle = ParserBundle::<f64>::load(path)?;
        let [domain] = bundle.domains.as_slice() else {
            return Err(CliError::config(format!(
                "{} is not a single-domain teacher (domains: {:?})",
                path.display(),
                bundle.domains
            )));
        };
        if covered.contains(domain) {
            return Err(CliError::config(format!(
                "two teachers given for domain {domain}"
            )));
        }
        covered.push(domain.clone());
        for &seed in &cfg.seeds {
            bundle.save(&teacher_checkpoint_path(&out, domain, seed))?;
        }
        eprintln!("[distill] teacher for {domain}: {}", path.display());
    }

    // Distill over exactly the domains the teachers cover, unless the
    // config narrows further.
    let mut cfg = cfg;
    if cfg.domains.is_none() {
        covered.sort();
        cfg.domains = Some(covered);
    }
    let mut extra = BTreeMap::new();
    extra.insert(
        "teachers".to_string(),
        serde_json::to_value(&teacher_paths)
            .map_err(|e| CliError::internal(format!("encoding teacher list: {e}")))?,
    );
    run_and_report(&cfg, &extra)?;
    Ok(())
}

// ------------------------------------------------------------------ eval

#[derive(Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub beam_width: usize,
    pub domains: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { model: None, corpus: None, beam_width: 1, domains: None, out: None }
    }
}

pub struct EvalFlags {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub beam_width: Option<usize>,
    pub domain: Option<String>,
    pub out: Option<PathBuf>,
}

/// A `--model` argument may be a checkpoint file or a directory holding
/// one; directories with several checkpoints prefer the unified student.
fn resolve_model_path(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if !path.is_dir() {
        return Err(CliError::missing(format!(
            "model path {} does not exist",
            path.display()
        )));
    }
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::missing(format!("reading {}: {e}", path.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json")
                && !name.ends_with("-config.json")
                && !name.ends_with("-result.json")
                && !name.ends_with("-eval.json")
                && name != "stats.json"
        })
        .collect();
    candidates.sort();
    match candidates.len() {
        0 => Err(CliError::missing(format!(
            "no checkpoint found under {}",
            path.display()
        ))),
        1 => Ok(candidates.remove(0)),
        _ => {
            let students: Vec<&PathBuf> = candidates
                .iter()
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.contains("-student-"))
                })
                .collect();
            if students.len() == 1 {
                Ok(students[0].clone())
            } else {
                Err(CliError::config(format!(
                    "several checkpoints under {}; pass one explicitly: {}",
                    path.display(),
                    candidates
                        .iter()
                        .map(|p| p.display().to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                )))
            }
        }
    }
}

pub fn eval(flags: EvalFlags, config_path: Option<&Path>) -> Result<(), CliError> {
    let started = Instant::now();
    let (mut cfg, _) = resolve_config(&EvalConfig::default(), config_path, &[])?;
    if let Some(v) = flags.model {
        cfg.model = Some(v);
    }
    if let Some(v) = flags.corpus {
        cfg.corpus = Some(v);
    }
    if let Some(v) = flags.beam_width {
        cfg.beam_width = v;
    }
    if let Some(v) = flags.domain {
        cfg.domains = Some(vec![v]);
    }
    if let Some(v) = flags.out {
        cfg.out = Some(v);
    }
    let model_arg = cfg
        .model
        .clone()
        .ok_or_else(|| CliError::config("no model given (--model or `model` in the config)"))?;
    let corpus_path = cfg
        .corpus
        .clone()
        .ok_or_else(|| CliError::config("no corpus given (--corpus or `corpus` in the config)"))?;
    let model_path = resolve_model_path(&model_arg)?;
    let bundle = ParserBundle::<f64>::load(&model_path)?;
    let corpus = Corpus::load_dir(&corpus_path)?;
    let prep = PreparedCorpus::prepare(corpus)?;
    for (side, loaded, current) in [
        ("source", bundle.src_vocab.sha256_hex(), prep.src_vocab.sha256_hex()),
        ("target", bundle.tgt_vocab.sha256_hex(), prep.tgt_vocab.sha256_hex()),
    ] {
        if loaded != current {
            return Err(ModelError::VocabMismatch {
                side,
                expected: loaded,
                actual: current,
            }
            .into());
        }
    }
    let domains = match &cfg.domains {
        Some(ds) => ds.clone(),
        None => bundle.domains.clone(),
    };
    for d in &domains {
        if !prep.domains.contains(d) {
            return Err(CliError::config(format!(
                "domain `{d}` is not in the corpus (has: {})",
                prep.domains.join(", ")
            )));
        }
    }
    let test: Vec<_> = prep
        .test
        .iter()
        .filter(|i| domains.contains(&i.domain))
        .cloned()
        .collect();
    eprintln!(
        "[eval] {} on {} test instances ({} domains), beam width {}",
        model_path.display(),
        test.len(),
        domains.len(),
        cfg.beam_width
    );
    let parser = BeamPredictor { model: &bundle.model, width: cfg.beam_width };
    let by_domain = evaluate(&parser, &test, &prep.corpus.kbs, &prep.tgt_vocab)?;
    let hard: BTreeMap<&String, f64> = by_domain.iter().map(|(d, e)| (d, e.hard_pct)).collect();
    let soft: BTreeMap<&String, f64> = by_domain.iter().map(|(d, e)| (d, e.soft_pct)).collect();
    let average = hard.values().sum::<f64>() / hard.len() as f64;
    let result = json!({
        "system": "eval",
        "seed": 0,
        "model": model_path.display().to_string(),
        "beam_width": cfg.beam_width,
        "per_domain": hard,
        "per_domain_soft_f1": soft,
        "average": average,
    });
    let out_path = cfg.out.clone().unwrap_or_else(|| {
        let stem = model_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("model");
        model_path.with_file_name(format!("{stem}-eval.json"))
    });
    write_json(&out_path, &result)?;
    let snapshot_path = out_path.with_file_name(format!(
        "{}-config.json",
        out_path.file_stem().and_then(|s| s.to_str()).unwrap_or("eval")
    ));
    snapshot_config(&snapshot_path, &cfg)?;
    for (domain, acc) in &hard {
        eprintln!("[eval] {domain}: {acc:.1}% hard");
    }
    eprintln!(
        "[eval] average {average:.1}%; wrote {} in {:.1}s",
        out_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// ------------------------------------------------------- normalize, stats

pub fn normalize(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::missing(format!("reading {}: {e}", input.display())))?;
    let mut lines = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (tokens, entity_map) = normalize_external(line).map_err(|e| {
            CliError::config(format!("{}:{}: {e}", input.display(), lineno + 1))
        })?;
        let row = json!({ "tokens": tokens, "entity_map": entity_map });
        lines.push(
            serde_json::to_string(&row)
                .map_err(|e| CliError::internal(format!("encoding: {e}")))?,
        );
    }
    let body = lines.join("\n") + "\n";
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::missing(format!("writing {}: {e}", path.display())))?,
        None => print!("{body}"),
    }
    Ok(())
}

pub fn stats(corpus_path: &Path) -> Result<(), CliError> {
    let corpus = Corpus::load_dir(corpus_path)?;
    let stats = corpus_stats(&corpus);
    println!(
        "{:<12} {:>10} {:>16} {:>14} {:>16}",
        "domain", "instances", "utterance-vocab", "program-vocab", "avg-program-len"
    );
    for (domain, s) in &stats {
        println!(
            "{:<12} {:>10} {:>16} {:>14} {:>16.2}",
            domain, s.instances, s.utterance_vocab, s.program_vocab, s.avg_program_len
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- report

struct ParsedResult {
    system: SystemKind,
    fraction: f64,
    run: SeedResult,
}

fn parse_result_file(path: &Path) -> Result<ParsedResult, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::missing(format!("reading {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| CliError::config(format!("{}: {what}", path.display()));
    let system: SystemKind = serde_json::from_value(
        value.get("system").cloned().ok_or_else(|| bad("missing `system`"))?,
    )
    .map_err(|e| bad(&format!("bad `system`: {e}")))?;
    let seed = value
        .get("seed")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| bad("missing numeric `seed`"))?;
    let per_domain: BTreeMap<String, f64> = serde_json::from_value(
        value.get("per_domain").cloned().ok_or_else(|| bad("missing `per_domain`"))?,
    )
    .map_err(|e| bad(&format!("bad `per_domain`: {e}")))?;
    let stored_avg = value
        .get("average")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| bad("missing numeric `average`"))?;
    let fraction = value
        .get("parallel_fraction")
        .and_then(|v| v.as_f64())
        .unwrap_or(0.0);
    let run = SeedResult::new(seed, per_domain).map_err(CliError::from)?;
    if (run.average - stored_avg).abs() > 1e-9 {
        return Err(bad(&format!(
            "stored average {stored_avg} but domain mean is {}",
            run.average
        )));
    }
    Ok(ParsedResult { system, fraction, run })
}

pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::config("report needs at least one result file"));
    }
    let parsed: Vec<ParsedResult> = inputs
        .iter()
        .map(|p| parse_result_file(p))
        .collect::<Result<_, _>>()?;
    let mut fractions: Vec<f64> = parsed.iter().map(|p| p.fraction).collect();
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fractions.dedup();

    let group = |want_fraction: Option<f64>| -> Result<Vec<ResultTable>, CliError> {
        let mut by_system: BTreeMap<SystemKind, Vec<SeedResult>> = BTreeMap::new();
        for p in &parsed {
            if want_fraction.is_none_or(|f| p.fraction == f) {
                by_system.entry(p.system).or_default().push(p.run.clone());
            }
        }
        by_system
            .into_iter()
            .map(|(system, mut runs)| {
                runs.sort_by_key(|r| r.seed);
                ResultTable::new(system, runs).map_err(CliError::from)
            })
            .collect()
    };

    let artifact;
    if fractions.len() > 1 {
        // A pretraining sweep: one line per fraction.
        let mut points = Vec::new();
        for &f in &fractions {
            let tables = group(Some(f))?;
            let [table] = tables.as_slice() else {
                return Err(CliError::config(
                    "fraction sweep mixes several systems; report one system at a time",
                ));
            };
            points.push((f, table.clone()));
        }
        print!("{}", render_fraction_series(&points).map_err(CliError::from)?);
        let entries: Vec<Value> = points
            .iter()
            .map(|(f, t)| {
                Ok(json!({ "fraction": f, "table": tables_to_json(&[t.clone()])? }))
            })
            .collect::<Result<_, HarnessError>>()
            .map_err(CliError::from)?;
        artifact = json!({ "fractions": entries });
    } else {
        let tables = group(None)?;
        print!("{}", render_grid(&tables).map_err(CliError::from)?);
        artifact = tables_to_json(&tables).map_err(CliError::from)?;
    }
    if let Some(path) = out {
        write_json(path, &artifact)?;
        let snapshot = json!({ "inputs": inputs });
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        write_json(&path.with_file_name(format!("{stem}-config.json")), &snapshot)?;
        eprintln!("[report] wrote {}", path.display());
    }
    Ok(())
}
