//! Epoch drivers: shuffled minibatches around the three step functions,
//! one validation pass per epoch, patience-based early stopping with
//! best-parameter restoration, and the optional supervised pretraining
//! phase on a parallel subset.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::params::ParamStore;
use crate::error::TrainError;
use crate::lang::{execute, hard_match, parse_program, KnowledgeBase};
use crate::model::Seq2Seq;
use crate::scalar::Scalar;
use crate::train::{
    decode_program, distill_step, reinforce_step, supervised_loss, supervised_step,
    teacher_trace, TeacherTrace, TrainConfig, TrainInstance, TrainLog,
};
use crate::vocab::Vocab;

/// Patience bookkeeping: remembers the best metric seen and the parameters
/// that produced it, and reports when `patience` observations in a row have
/// failed to improve on it.
struct EarlyStop<S> {
    higher_better: bool,
    patience: usize,
    best: f64,
    strikes: usize,
    snapshot: Vec<Vec<S>>,
}

impl<S: Scalar> EarlyStop<S> {
    fn new(higher_better: bool, patience: usize, params: &ParamStore<S>) -> Self {
        EarlyStop {
            higher_better,
            patience,
            best: if higher_better {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            strikes: 0,
            snapshot: params.snapshot_values(),
        }
    }

    /// Records one validation value; returns true when training should stop.
    fn observe(&mut self, value: f64, params: &ParamStore<S>) -> bool {
        let improved = if self.higher_better {
            value > self.best
        } else {
            value < self.best
        };
        if improved {
            self.best = value;
            self.strikes = 0;
            self.snapshot = params.snapshot_values();
            false
        } else {
            self.strikes += 1;
            self.strikes >= self.patience
        }
    }

    fn restore(self, params: &mut ParamStore<S>) {
        params.restore_values(&self.snapshot);
    }
}

fn shuffled_batches<'a>(
    data: &'a [TrainInstance],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<&'a TrainInstance>> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| &data[i]).collect())
        .collect()
}

/// Mean token-level cross-entropy over an evaluation set, computed in
/// batches and combined exactly (weighted by prediction positions).
fn eval_loss<S: Scalar>(
    model: &Seq2Seq<S>,
    data: &[TrainInstance],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let mut nll = 0.0;
    let mut positions = 0usize;
    for chunk in data.chunks(batch_size) {
        let batch: Vec<&TrainInstance> = chunk.iter().collect();
        let mean = supervised_loss(model, &batch)?;
        let chunk_positions: usize = chunk
            .iter()
            .map(|i| i.program.as_ref().map(|p| p.len()).unwrap_or(0))
            .sum();
        nll += mean * chunk_positions as f64;
        positions += chunk_positions;
    }
    if positions == 0 {
        return Err(TrainError::Contract(
            "evaluation set has no prediction positions".to_string(),
        ));
    }
    Ok(nll / positions as f64)
}

/// Fraction of instances whose greedy decode parses, executes against the
/// instance's own domain knowledge base, and reproduces the gold denotation
/// exactly. Failures of any kind score 0 for that instance.
pub fn denotation_accuracy<S: Scalar>(
    model: &Seq2Seq<S>,
    data: &[TrainInstance],
    kbs: &BTreeMap<String, KnowledgeBase>,
    tgt_vocab: &Vocab,
) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Contract(
            "cannot evaluate accuracy on an empty set".to_string(),
        ));
    }
    let mut correct = 0usize;
    for inst in data {
        let kb = kbs.get(&inst.domain).ok_or_else(|| {
            TrainError::Contract(format!(
                "no knowledge base for domain {} (instance {})",
                inst.domain, inst.id
            ))
        })?;
        let hyp = model.greedy_decode(&inst.src)?;
        let words = decode_program(&hyp.tokens, tgt_vocab);
        let Ok(expr) = parse_program(&words) else {
            continue;
        };
        let Ok(denotation) = execute(&expr, kb, &inst.entity_map) else {
            continue;
        };
        if hard_match(&denotation, &inst.denotation) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Supervised training to convergence on the validation loss. An empty
/// training set returns immediately with an empty log and the model
/// untouched (the degenerate pretraining fraction).
pub fn train_supervised<S: Scalar>(
    model: &mut Seq2Seq<S>,
    train: &[TrainInstance],
    dev: &[TrainInstance],
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    let mut log = TrainLog::default();
    if train.is_empty() {
        return Ok(log);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStop::new(false, cfg.patience, &model.params);
    let mut step = 0u64;
    for _ in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        let batches = shuffled_batches(train, cfg.batch_size, &mut rng);
        let n_batches = batches.len();
        for batch in batches {
            epoch_loss += supervised_step(model, &batch, &cfg.optim)?;
            step += 1;
        }
        log.push(step, "train", "loss", epoch_loss / n_batches as f64);
        let dev_loss = eval_loss(model, dev, cfg.batch_size)?;
        log.push(step, "dev", "loss", dev_loss);
        if stopper.observe(dev_loss, &model.params) {
            break;
        }
    }
    stopper.restore(&mut model.params);
    Ok(log)
}

/// Weakly-supervised training: policy-gradient steps over denotation
/// rewards, validated by greedy denotation accuracy.
pub fn train_weak<S: Scalar>(
    model: &mut Seq2Seq<S>,
    train: &[TrainInstance],
    dev: &[TrainInstance],
    kbs: &BTreeMap<String, KnowledgeBase>,
    tgt_vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Contract(
            "weak training requires a non-empty training set".to_string(),
        ));
    }
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStop::new(true, cfg.patience, &model.params);
    let mut step = 0u64;
    for _ in 0..cfg.max_epochs {
        let mut epoch_reward = 0.0;
        let batches = shuffled_batches(train, cfg.batch_size, &mut rng);
        let n_batches = batches.len();
        for batch in batches {
            let (expected, _) = reinforce_step(
                model,
                &batch,
                kbs,
                tgt_vocab,
                cfg.beam_width,
                cfg.reward_mode,
                &cfg.optim,
            )?;
            epoch_reward += expected;
            step += 1;
        }
        log.push(step, "train", "expected_reward", epoch_reward / n_batches as f64);
        let acc = denotation_accuracy(model, dev, kbs, tgt_vocab)?;
        log.push(step, "dev", "denotation_acc", acc);
        if stopper.observe(acc, &model.params) {
            break;
        }
    }
    stopper.restore(&mut model.params);
    Ok(log)
}

/// Distillation training: every epoch re-traces the frozen teachers along
/// their own greedy decodes (traces are cheap to recompute and never
/// materialized), interleaving domains by a global shuffle, and trains the
/// student to match the traced distributions.
pub fn train_distill<S: Scalar>(
    student: &mut Seq2Seq<S>,
    teachers: &BTreeMap<String, &Seq2Seq<S>>,
    train: &[TrainInstance],
    dev: &[TrainInstance],
    kbs: &BTreeMap<String, KnowledgeBase>,
    tgt_vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Contract(
            "distillation requires a non-empty training set".to_string(),
        ));
    }
    for inst in train {
        if !teachers.contains_key(&inst.domain) {
            return Err(TrainError::Contract(format!(
                "no teacher for domain {} (instance {})",
                inst.domain, inst.id
            )));
        }
    }
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStop::new(true, cfg.patience, &student.params);
    let mut step = 0u64;
    for _ in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        let batches = shuffled_batches(train, cfg.batch_size, &mut rng);
        let n_batches = batches.len();
        for batch in batches {
            let traces: Vec<TeacherTrace<S>> = batch
                .iter()
                .map(|inst| {
                    teacher_trace(
                        teachers[&inst.domain],
                        &inst.id,
                        &inst.domain,
                        &inst.src,
                        cfg.temperature,
                    )
                })
                .collect::<Result<_, _>>()?;
            let refs: Vec<&TeacherTrace<S>> = traces.iter().collect();
            epoch_loss += distill_step(student, &refs, &cfg.optim)?;
            step += 1;
        }
        log.push(step, "train", "loss", epoch_loss / n_batches as f64);
        let acc = denotation_accuracy(student, dev, kbs, tgt_vocab)?;
        log.push(step, "dev", "denotation_acc", acc);
        if stopper.observe(acc, &student.params) {
            break;
        }
    }
    stopper.restore(&mut student.params);
    Ok(log)
}

/// What follows the supervised pretraining phase.
pub enum ContinueWith<'a, S> {
    Weak,
    Distill {
        teachers: &'a BTreeMap<String, &'a Seq2Seq<S>>,
    },
}

/// The partial-supervision protocol: a `parallel_fraction` share of the
/// training split (chosen by a seeded shuffle) is treated as carrying gold
/// programs and used for supervised pretraining to convergence; training
/// then continues on the full split with the weak or distillation
/// objective. Fraction 0 skips pretraining entirely and is bit-identical
/// to the plain pipeline.
pub fn pretrain_then<S: Scalar>(
    model: &mut Seq2Seq<S>,
    mode: ContinueWith<'_, S>,
    parallel_fraction: f64,
    train: &[TrainInstance],
    dev: &[TrainInstance],
    kbs: &BTreeMap<String, KnowledgeBase>,
    tgt_vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    if !(0.0..=1.0).contains(&parallel_fraction) || parallel_fraction.is_nan() {
        return Err(TrainError::Config(format!(
            "parallel fraction must lie in [0, 1], got {parallel_fraction}"
        )));
    }
    cfg.validate()?;
    let k = (parallel_fraction * train.len() as f64).round() as usize;
    let k = k.min(train.len());
    let mut log = TrainLog::default();
    if k > 0 {
        let mut idx: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A);
        idx.shuffle(&mut rng);
        let subset: Vec<TrainInstance> = idx[..k].iter().map(|&i| train[i].clone()).collect();
        let pre_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(0x517E),
            optim: cfg.pretrain_optim.unwrap_or(cfg.optim),
            ..cfg.clone()
        };
        log.extend(train_supervised(model, &subset, dev, &pre_cfg)?);
    }
    let offset = log.rows.last().map(|r| r.step).unwrap_or(0);
    let mut cont = match mode {
        ContinueWith::Weak => train_weak(model, train, dev, kbs, tgt_vocab, cfg)?,
        ContinueWith::Distill { teachers } => {
            train_distill(model, teachers, train, dev, kbs, tgt_vocab, cfg)?
        }
    };
    for row in &mut cont.rows {
        row.step += offset;
    }
    log.extend(cont);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_bundle, generate_corpus, Split};
    use crate::model::ModelConfig;
    use crate::train::{build_vocabs, encode_split, RewardMode};
    use crate::vocab::TokenId;
    use crate::lang::Denotation;

    fn mini_world() -> (
        Vec<TrainInstance>,
        Vec<TrainInstance>,
        BTreeMap<String, KnowledgeBase>,
        Vocab,
        Vocab,
    ) {
        let corpus = generate_corpus(&default_bundle(), 12, 11).unwrap();
        let (src_vocab, tgt_vocab) = build_vocabs(&corpus);
        let train =
            encode_split(&corpus, Split::Train, Some("recipes"), &src_vocab, &tgt_vocab).unwrap();
        let dev =
            encode_split(&corpus, Split::Dev, Some("recipes"), &src_vocab, &tgt_vocab).unwrap();
        (train, dev, corpus.kbs, src_vocab, tgt_vocab)
    }

    fn model_for(src_vocab: &Vocab, tgt_vocab: &Vocab, seed: u64) -> Seq2Seq<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seq2Seq::new(
            ModelConfig::new(1, 24, 16, src_vocab.len(), tgt_vocab.len()),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn early_stop_tracks_best_and_restores_it() {
        let mut params: ParamStore<f64> = ParamStore::new();
        let id = params.add("w", crate::autodiff::Tensor::row(vec![0.0]));
        let mut stop = EarlyStop::new(true, 2, &params);

        params.tensor_mut(id).values_mut()[0] = 1.0;
        assert!(!stop.observe(0.5, &params)); // improvement, snapshot at 1.0
        params.tensor_mut(id).values_mut()[0] = 2.0;
        assert!(!stop.observe(0.4, &params)); // strike 1
        params.tensor_mut(id).values_mut()[0] = 3.0;
        assert!(stop.observe(0.5, &params)); // not >, strike 2 → stop
        stop.restore(&mut params);
        assert_eq!(params.tensor(id).values()[0], 1.0);

        // Lower-is-better direction.
        let mut stop = EarlyStop::new(false, 1, &params);
        assert!(!stop.observe(0.3, &params));
        assert!(stop.observe(0.3, &params), "equal is not an improvement");
    }

    #[test]
    fn supervised_driver_learns_and_restores_best_dev_loss() {
        let (train, dev, _, src_vocab, tgt_vocab) = mini_world();
        let mut model = model_for(&src_vocab, &tgt_vocab, 5);
        let cfg = TrainConfig {
            max_epochs: 12,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let log = train_supervised(&mut model, &train, &dev, &cfg).unwrap();
        let dev_rows: Vec<f64> = log
            .rows
            .iter()
            .filter(|r| r.split == "dev" && r.metric == "loss")
            .map(|r| r.value)
            .collect();
        assert_eq!(dev_rows.len(), 12, "no early stop while improving");
        assert!(dev_rows.last().unwrap() < dev_rows.first().unwrap());
        let best = dev_rows.iter().cloned().fold(f64::INFINITY, f64::min);
        let final_loss = eval_loss(&model, &dev, cfg.batch_size).unwrap();
        assert!(
            (final_loss - best).abs() <= 1e-12,
            "restored model should sit at the best dev loss: {final_loss} vs {best}"
        );
        let train_rows: Vec<f64> = log
            .rows
            .iter()
            .filter(|r| r.split == "train" && r.metric == "loss")
            .map(|r| r.value)
            .collect();
        assert!(train_rows.last().unwrap() < train_rows.first().unwrap());
    }

    #[test]
    fn supervised_driver_with_empty_train_is_a_no_op() {
        let (_, dev, _, src_vocab, tgt_vocab) = mini_world();
        let mut model = model_for(&src_vocab, &tgt_vocab, 7);
        let before = model.params.snapshot_values();
        let log = train_supervised(&mut model, &[], &dev, &TrainConfig::default()).unwrap();
        assert!(log.rows.is_empty());
        assert_eq!(model.params.snapshot_values(), before);
    }

    #[test]
    fn weak_driver_stops_after_patience_without_improvement() {
        // A model whose beam never earns reward: gradients are zero, the
        // dev metric is flat, and the driver must stop after exactly
        // `patience` epochs and leave the parameters untouched.
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let mut model = model_for(&src_vocab, &tgt_vocab, 9);
        let before = model.params.snapshot_values();
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 3,
            batch_size: 8,
            beam_width: 2,
            reward_mode: RewardMode::Denotation,
            ..TrainConfig::default()
        };
        let log = train_weak(
            &mut model,
            &train[..4],
            &dev[..2.min(dev.len())],
            &kbs,
            &tgt_vocab,
            &cfg,
        )
        .unwrap();
        let accs: Vec<f64> = log
            .rows
            .iter()
            .filter(|r| r.metric == "denotation_acc")
            .map(|r| r.value)
            .collect();
        if accs.iter().all(|&a| a == 0.0) {
            // Flat at the initial -inf→0.0 improvement plus `patience`
            // strikes: 1 + 3 epochs.
            assert_eq!(accs.len(), 1 + cfg.patience);
            assert_eq!(model.params.snapshot_values(), before);
        }
    }

    #[test]
    fn distill_driver_requires_a_teacher_per_domain() {
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let mut student = model_for(&src_vocab, &tgt_vocab, 13);
        let teachers = BTreeMap::new();
        let err = train_distill(
            &mut student,
            &teachers,
            &train,
            &dev,
            &kbs,
            &tgt_vocab,
            &TrainConfig::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no teacher for domain recipes"), "{msg}");
    }

    #[test]
    fn distill_driver_pulls_student_toward_teacher_decodes() {
        let (train, _, kbs, src_vocab, tgt_vocab) = mini_world();
        // Teacher: memorize a small slice with supervision.
        let mut teacher = model_for(&src_vocab, &tgt_vocab, 15);
        let slice = &train[..6];
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 300,
            batch_size: 6,
            optim: crate::train::OptimConfig {
                lr: 0.01,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        train_supervised(&mut teacher, slice, slice, &cfg).unwrap();
        assert_eq!(
            denotation_accuracy(&teacher, slice, &kbs, &tgt_vocab).unwrap(),
            1.0,
            "teacher must memorize its slice for this test to be meaningful"
        );

        let mut student = model_for(&src_vocab, &tgt_vocab, 16);
        let mut teachers: BTreeMap<String, &Seq2Seq<f64>> = BTreeMap::new();
        teachers.insert("recipes".to_string(), &teacher);
        // Validating on the slice itself lets the best-parameter snapshot
        // track the student's actual progress toward the teacher.
        let dcfg = TrainConfig {
            max_epochs: 150,
            batch_size: 6,
            patience: 150,
            optim: crate::train::OptimConfig {
                lr: 0.01,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        let mismatch_before = greedy_mismatches(&student, &teacher, slice);
        let log =
            train_distill(&mut student, &teachers, slice, slice, &kbs, &tgt_vocab, &dcfg).unwrap();
        let mismatch_after = greedy_mismatches(&student, &teacher, slice);
        assert!(
            mismatch_after < mismatch_before,
            "student should move toward the teacher: {mismatch_before} -> {mismatch_after}"
        );
        let losses: Vec<f64> = log
            .rows
            .iter()
            .filter(|r| r.split == "train" && r.metric == "loss")
            .map(|r| r.value)
            .collect();
        assert!(
            losses.last().unwrap() < &(losses[0] * 0.5),
            "distillation loss should fall substantially: {losses:?}"
        );
    }

    fn greedy_mismatches(
        student: &Seq2Seq<f64>,
        teacher: &Seq2Seq<f64>,
        data: &[TrainInstance],
    ) -> usize {
        data.iter()
            .filter(|i| {
                student.greedy_decode(&i.src).unwrap().tokens
                    != teacher.greedy_decode(&i.src).unwrap().tokens
            })
            .count()
    }

    #[test]
    fn pretrain_fraction_zero_is_bit_identical_to_plain_weak() {
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 8,
            beam_width: 3,
            ..TrainConfig::default()
        };
        let mut direct = model_for(&src_vocab, &tgt_vocab, 21);
        train_weak(&mut direct, &train[..6], &dev[..2], &kbs, &tgt_vocab, &cfg).unwrap();
        let mut via = model_for(&src_vocab, &tgt_vocab, 21);
        pretrain_then(
            &mut via,
            ContinueWith::Weak,
            0.0,
            &train[..6],
            &dev[..2],
            &kbs,
            &tgt_vocab,
            &cfg,
        )
        .unwrap();
        assert_eq!(direct.params.snapshot_values(), via.params.snapshot_values());
    }

    #[test]
    fn pretrain_optim_defaults_to_the_main_optimizer() {
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let base = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            beam_width: 2,
            ..TrainConfig::default()
        };
        let mut shared = model_for(&src_vocab, &tgt_vocab, 31);
        pretrain_then(
            &mut shared,
            ContinueWith::Weak,
            0.5,
            &train[..8],
            &dev[..2],
            &kbs,
            &tgt_vocab,
            &base,
        )
        .unwrap();
        let explicit_cfg = TrainConfig {
            pretrain_optim: Some(base.optim),
            ..base.clone()
        };
        let mut explicit = model_for(&src_vocab, &tgt_vocab, 31);
        pretrain_then(
            &mut explicit,
            ContinueWith::Weak,
            0.5,
            &train[..8],
            &dev[..2],
            &kbs,
            &tgt_vocab,
            &explicit_cfg,
        )
        .unwrap();
        assert_eq!(
            shared.params.snapshot_values(),
            explicit.params.snapshot_values()
        );
    }

    #[test]
    fn pretrain_optim_override_changes_the_pretraining_phase() {
        // Two runs identical in everything but the pretraining rate must
        // diverge; if the override were ignored they would be bit-equal.
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let run = |pre_lr: f64| {
            let cfg = TrainConfig {
                max_epochs: 2,
                batch_size: 4,
                beam_width: 2,
                pretrain_optim: Some(crate::train::OptimConfig {
                    lr: pre_lr,
                    ..Default::default()
                }),
                ..TrainConfig::default()
            };
            let mut model = model_for(&src_vocab, &tgt_vocab, 33);
            pretrain_then(
                &mut model,
                ContinueWith::Weak,
                0.5,
                &train[..8],
                &dev[..2],
                &kbs,
                &tgt_vocab,
                &cfg,
            )
            .unwrap();
            model.params.snapshot_values()
        };
        assert_eq!(run(0.01), run(0.01), "same rate must stay deterministic");
        assert_ne!(run(0.01), run(1e-9));
    }

    #[test]
    fn pretrain_rejects_out_of_range_fractions() {
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        for bad in [-0.1, 1.1, f64::NAN] {
            let mut model = model_for(&src_vocab, &tgt_vocab, 23);
            let err = pretrain_then(
                &mut model,
                ContinueWith::Weak,
                bad,
                &train,
                &dev,
                &kbs,
                &tgt_vocab,
                &TrainConfig::default(),
            )
            .unwrap_err();
            assert!(matches!(err, TrainError::Config(_)), "{bad}: {err}");
        }
    }

    #[test]
    fn pretrain_phase_actually_trains_on_the_subset() {
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            beam_width: 2,
            ..TrainConfig::default()
        };
        let mut model = model_for(&src_vocab, &tgt_vocab, 25);
        let log = pretrain_then(
            &mut model,
            ContinueWith::Weak,
            0.5,
            &train[..8],
            &dev[..2],
            &kbs,
            &tgt_vocab,
            &cfg,
        )
        .unwrap();
        // Both phases appear in the log, and the continuation's steps come
        // after the pretraining steps.
        let pre_steps: Vec<u64> = log
            .rows
            .iter()
            .filter(|r| r.metric == "loss" && r.split == "train")
            .map(|r| r.step)
            .collect();
        let weak_steps: Vec<u64> = log
            .rows
            .iter()
            .filter(|r| r.metric == "expected_reward")
            .map(|r| r.step)
            .collect();
        assert!(!pre_steps.is_empty());
        assert!(!weak_steps.is_empty());
        assert!(weak_steps.first().unwrap() > pre_steps.last().unwrap());
    }

    #[test]
    fn denotation_accuracy_is_exact_on_a_forced_parser() {
        // Oracle: a supervised model memorizing two instances to the point
        // where its greedy decodes equal the gold programs must score 1.0;
        // scoring across instances it never saw generally does not.
        let (train, dev, kbs, src_vocab, tgt_vocab) = mini_world();
        let mut model = model_for(&src_vocab, &tgt_vocab, 27);
        let slice = &train[..2];
        let cfg = TrainConfig {
            max_epochs: 300,
            batch_size: 2,
            patience: 300,
            optim: crate::train::OptimConfig {
                lr: 0.01,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        train_supervised(&mut model, slice, slice, &cfg).unwrap();
        let memorized = slice
            .iter()
            .all(|i| {
                model.greedy_decode(&i.src).unwrap().tokens == *i.program.as_ref().unwrap()
            });
        assert!(memorized, "memorization on two instances should succeed");
        let acc = denotation_accuracy(&model, slice, &kbs, &tgt_vocab).unwrap();
        assert_eq!(acc, 1.0);
        let err = denotation_accuracy(&model, &[], &kbs, &tgt_vocab).unwrap_err();
        assert!(matches!(err, TrainError::Contract(_)));
        let _ = dev;
    }

    #[test]
    fn accuracy_errors_on_unknown_domain() {
        let (train, _, _, src_vocab, tgt_vocab) = mini_world();
        let model = model_for(&src_vocab, &tgt_vocab, 29);
        let inst = TrainInstance {
            id: "x".to_string(),
            domain: "unknown".to_string(),
            src: vec![TokenId(1)],
            program: None,
            denotation: Denotation::Count(0),
            entity_map: BTreeMap::new(),
        };
        let err = denotation_accuracy(&model, &[inst], &BTreeMap::new(), &tgt_vocab).unwrap_err();
        assert!(err.to_string().contains("unknown"), "{err}");
        let _ = train;
    }
}
