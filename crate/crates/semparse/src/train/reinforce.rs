//! Weakly-supervised training: beam search, denotation-level rewards, and a
//! baseline-centered policy-gradient update. The model only ever sees
//! (utterance, denotation) pairs; programs are latent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::{rmsprop_update, GRAD_CLIP_NORM};
use crate::error::TrainError;
use crate::lang::{execute, metrics, parse_program, KnowledgeBase};
use crate::model::{Hypothesis, Seq2Seq};
use crate::scalar::Scalar;
use crate::train::{decode_program, OptimConfig, RewardMode, TrainInstance};
use crate::vocab::{TokenId, Vocab, EOS};

/// One beam hypothesis with its reward, kept for logging and diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoredHyp {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
    pub reward: f64,
}

/// Per-instance record of a policy-gradient step: the beam, each
/// hypothesis's reward, and the baseline (the plain mean of the rewards).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardRecord {
    pub instance: String,
    pub hyps: Vec<ScoredHyp>,
    pub baseline: f64,
}

impl RewardRecord {
    /// Beam-normalized hypothesis weights: softmax of the beam log-probs.
    /// These are treated as constants by the gradient estimator.
    pub fn weights(&self) -> Vec<f64> {
        let max = self
            .hyps
            .iter()
            .map(|h| h.log_prob)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.hyps.iter().map(|h| (h.log_prob - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Beam-approximated expected reward Σ ŵ(z)·R(x,z).
    pub fn expected_reward(&self) -> f64 {
        self.weights()
            .iter()
            .zip(&self.hyps)
            .map(|(w, h)| w * h.reward)
            .sum()
    }
}

/// Scores one hypothesis. Denotation mode parses and executes the predicted
/// program and takes the balanced F1 against the gold denotation; anything
/// that fails to parse or execute earns 0. String-match mode is the exact
/// token comparison against the gold program.
fn reward_of(
    hyp: &[TokenId],
    inst: &TrainInstance,
    kb: &KnowledgeBase,
    tgt_vocab: &Vocab,
    mode: RewardMode,
) -> Result<f64, TrainError> {
    match mode {
        RewardMode::Denotation => {
            let words = decode_program(hyp, tgt_vocab);
            let Ok(expr) = parse_program(&words) else {
                return Ok(0.0);
            };
            let Ok(denotation) = execute(&expr, kb, &inst.entity_map) else {
                return Ok(0.0);
            };
            Ok(metrics::soft_f1(&denotation, &inst.denotation))
        }
        RewardMode::StringMatch => {
            let gold = inst.program.as_deref().ok_or_else(|| {
                TrainError::Contract(format!(
                    "instance {} has no gold program for string-match rewards",
                    inst.id
                ))
            })?;
            Ok(metrics::string_match_reward(
                &tgt_vocab.decode(hyp),
                &tgt_vocab.decode(gold),
                EOS,
            ))
        }
    }
}

/// Runs the beam and scores every hypothesis for one instance.
pub fn score_beam<S: Scalar>(
    model: &Seq2Seq<S>,
    inst: &TrainInstance,
    kb: &KnowledgeBase,
    tgt_vocab: &Vocab,
    beam_width: usize,
    mode: RewardMode,
) -> Result<RewardRecord, TrainError> {
    let beam: Vec<Hypothesis<S>> = model.beam_search(&inst.src, beam_width)?;
    let mut hyps = Vec::with_capacity(beam.len());
    for h in &beam {
        let reward = reward_of(&h.tokens, inst, kb, tgt_vocab, mode)?;
        if !(0.0..=1.0).contains(&reward) {
            return Err(TrainError::Contract(format!(
                "reward {reward} outside [0, 1] for instance {}",
                inst.id
            )));
        }
        hyps.push(ScoredHyp {
            tokens: h.tokens.clone(),
            log_prob: h.log_prob,
            finished: h.finished,
            reward,
        });
    }
    Ok(RewardRecord {
        instance: inst.id.to_string(),
        baseline: mean_reward(&hyps),
        hyps,
    })
}

/// Unweighted mean reward over the beam. When every reward is identical the
/// mean is returned exactly (summing and redividing would round, and the
/// centered rewards are required to cancel exactly in that case).
pub fn mean_reward(hyps: &[ScoredHyp]) -> f64 {
    let first = hyps[0].reward;
    if hyps.iter().all(|h| h.reward == first) {
        return first;
    }
    hyps.iter().map(|h| h.reward).sum::<f64>() / hyps.len() as f64
}

/// Records one instance's surrogate objective on the tape:
/// Σ_z ŵ(z)·(R − b)·NLL(z), whose gradient is the negated policy-gradient
/// estimator (descending it ascends expected reward). The weights and
/// centered rewards are baked in as constants — no gradient flows through
/// them. Hypotheses whose coefficient is exactly zero are skipped, so a
/// beam with uniform rewards contributes nothing at all.
fn surrogate_on<S: Scalar>(
    model: &Seq2Seq<S>,
    g: &mut Graph<S>,
    src: &[TokenId],
    record: &RewardRecord,
) -> Result<Option<NodeId>, TrainError> {
    let weights = record.weights();
    let mut terms: Vec<(f64, &ScoredHyp)> = Vec::new();
    for (w, h) in weights.iter().zip(&record.hyps) {
        let coeff = w * (h.reward - record.baseline);
        if coeff != 0.0 && !h.tokens.is_empty() {
            terms.push((coeff, h));
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let enc = model.encode_on(g, src)?;
    let mut total: Option<NodeId> = None;
    for (coeff, h) in terms {
        // Teacher-force the hypothesis exactly as emitted: finished beams
        // end with end-of-sequence, length-capped ones do not, and the
        // beam's log-prob covers precisely these steps either way.
        let logits = model.decode_tf_on(g, &enc, &h.tokens)?;
        let v = model.config.tgt_vocab_size;
        let mut nll: Option<NodeId> = None;
        for (node, &tok) in logits.iter().zip(&h.tokens) {
            let mut target = vec![S::zero(); v];
            target[tok.index()] = S::one();
            let step = g.softmax_xent(*node, target)?;
            nll = Some(match nll {
                None => step,
                Some(t) => g.add(t, step)?,
            });
        }
        let nll = nll.expect("hypothesis has tokens");
        let scaled = g.scale(nll, S::from_f64_c(coeff));
        total = Some(match total {
            None => scaled,
            Some(t) => g.add(t, scaled)?,
        });
    }
    Ok(total)
}

/// Accumulates policy gradients for pre-scored records into the parameter
/// store without updating, and returns the mean expected reward. Exposed
/// separately from [`reinforce_step`] so invariance properties can be
/// checked on the raw gradient buffers.
pub fn accumulate_reinforce_grads<S: Scalar>(
    model: &mut Seq2Seq<S>,
    batch: &[(&TrainInstance, &RewardRecord)],
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Contract(
            "reinforce step requires a non-empty batch".to_string(),
        ));
    }
    let mut g = Graph::new();
    let mut total: Option<NodeId> = None;
    for (inst, record) in batch {
        if let Some(term) = surrogate_on(model, &mut g, &inst.src, record)? {
            total = Some(match total {
                None => term,
                Some(t) => g.add(t, term)?,
            });
        }
    }
    model.params.zero_grads();
    if let Some(total) = total {
        let loss = g.scale(total, S::from_f64_c(1.0 / batch.len() as f64));
        let value = g.item(loss).to_f64_c();
        if !value.is_finite() {
            return Err(TrainError::Contract(format!(
                "reinforce surrogate is not finite: {value}"
            )));
        }
        g.backward(loss, &mut model.params)?;
    }
    let expected = batch
        .iter()
        .map(|(_, r)| r.expected_reward())
        .sum::<f64>()
        / batch.len() as f64;
    Ok(expected)
}

/// One policy-gradient step over a batch of weakly-supervised instances:
/// beam search per instance, reward per hypothesis, baseline-centered
/// weighted log-likelihood gradient, clip, RMSprop. Returns the batch-mean
/// expected reward and the per-instance records.
pub fn reinforce_step<S: Scalar>(
    model: &mut Seq2Seq<S>,
    batch: &[&TrainInstance],
    kbs: &BTreeMap<String, KnowledgeBase>,
    tgt_vocab: &Vocab,
    beam_width: usize,
    mode: RewardMode,
    opt: &OptimConfig,
) -> Result<(f64, Vec<RewardRecord>), TrainError> {
    if beam_width < 2 {
        return Err(TrainError::Config(format!(
            "beam width must be ≥ 2 so the baseline has something to average, got {beam_width}"
        )));
    }
    let mut records = Vec::with_capacity(batch.len());
    for inst in batch {
        let kb = kbs.get(&inst.domain).ok_or_else(|| {
            TrainError::Contract(format!(
                "no knowledge base for domain {} (instance {})",
                inst.domain, inst.id
            ))
        })?;
        records.push(score_beam(model, inst, kb, tgt_vocab, beam_width, mode)?);
    }
    let paired: Vec<(&TrainInstance, &RewardRecord)> =
        batch.iter().copied().zip(records.iter()).collect();
    let expected = accumulate_reinforce_grads(model, &paired)?;
    model.params.clip_global_grad_norm(GRAD_CLIP_NORM);
    rmsprop_update(&mut model.params, opt.lr, opt.decay, opt.eps)?;
    Ok((expected, records))
}
