//! Teacher-forced cross-entropy training against gold programs (the
//! skyline setting, also used for pretraining on a parallel subset).

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::{rmsprop_update, GRAD_CLIP_NORM};
use crate::error::TrainError;
use crate::model::Seq2Seq;
use crate::scalar::Scalar;
use crate::train::{OptimConfig, TrainInstance};

/// Builds the batch loss on a fresh tape: the sum of per-token
/// cross-entropies over every instance, divided by the total number of
/// prediction positions (each program token, end-of-sequence included,
/// is one position; there is no padding to mask).
fn batch_loss_on<S: Scalar>(
    model: &Seq2Seq<S>,
    g: &mut Graph<S>,
    batch: &[&TrainInstance],
) -> Result<NodeId, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Contract(
            "supervised step requires a non-empty batch".to_string(),
        ));
    }
    let mut total: Option<NodeId> = None;
    let mut positions = 0usize;
    for inst in batch {
        let program = inst.program.as_deref().ok_or_else(|| {
            TrainError::Contract(format!("instance {} has no gold program", inst.id))
        })?;
        let enc = model.encode_on(g, &inst.src)?;
        let nll = model.sequence_nll_on(g, &enc, program)?;
        positions += program.len();
        total = Some(match total {
            None => nll,
            Some(t) => g.add(t, nll)?,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(g.scale(total, S::from_f64_c(1.0 / positions as f64)))
}

/// Forward-only batch loss, used for validation and for finite-difference
/// checks. Leaves parameters and gradients untouched.
pub fn supervised_loss<S: Scalar>(
    model: &Seq2Seq<S>,
    batch: &[&TrainInstance],
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let loss = batch_loss_on(model, &mut g, batch)?;
    Ok(g.item(loss).to_f64_c())
}

/// One optimization step: mean token-level cross-entropy over the batch,
/// backprop, global-norm clipping, RMSprop update. Returns the loss value
/// before the update.
pub fn supervised_step<S: Scalar>(
    model: &mut Seq2Seq<S>,
    batch: &[&TrainInstance],
    opt: &OptimConfig,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let loss = batch_loss_on(model, &mut g, batch)?;
    let value = g.item(loss).to_f64_c();
    if !value.is_finite() {
        return Err(TrainError::Contract(format!(
            "supervised loss is not finite: {value}"
        )));
    }
    model.params.zero_grads();
    g.backward(loss, &mut model.params)?;
    model.params.clip_global_grad_norm(GRAD_CLIP_NORM);
    rmsprop_update(&mut model.params, opt.lr, opt.decay, opt.eps)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Denotation;
    use crate::model::ModelConfig;
    use crate::vocab::TokenId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn tiny_model(seed: u64) -> Seq2Seq<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seq2Seq::new(ModelConfig::new(2, 8, 6, 7, 5), &mut rng).unwrap()
    }

    fn inst(id: &str, src: &[u32], prog: &[u32]) -> TrainInstance {
        TrainInstance {
            id: id.to_string(),
            domain: "toy".to_string(),
            src: src.iter().map(|&i| TokenId(i)).collect(),
            program: Some(prog.iter().map(|&i| TokenId(i)).collect()),
            denotation: Denotation::Count(0),
            entity_map: BTreeMap::new(),
        }
    }

    #[test]
    fn missing_gold_program_is_a_contract_violation() {
        let mut model = tiny_model(3);
        let mut i = inst("x", &[1, 2], &[3, 1, 0]);
        i.program = None;
        let err = supervised_step(&mut model, &[&i], &OptimConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Contract(_)), "{err}");
        let err = supervised_step(&mut model, &[], &OptimConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Contract(_)), "{err}");
    }

    #[test]
    fn loss_matches_mean_of_per_instance_nll() {
        let model = tiny_model(7);
        let a = inst("a", &[1, 2, 3], &[2, 4, 0]);
        let b = inst("b", &[4], &[1, 0]);
        let joint = supervised_loss(&model, &[&a, &b]).unwrap();
        let mut per_token_sum = 0.0;
        for i in [&a, &b] {
            let prog = i.program.as_ref().unwrap();
            let lp = model
                .sequence_log_prob(&i.src, prog)
                .expect("programs end with eos");
            per_token_sum += -lp;
        }
        let expected = per_token_sum / 5.0; // 3 + 2 prediction positions
        assert!((joint - expected).abs() < 1e-12, "{joint} vs {expected}");
    }

    #[test]
    fn gradient_passes_finite_difference_check() {
        let mut model = tiny_model(11);
        let a = inst("a", &[1, 2], &[2, 3, 0]);
        let b = inst("b", &[3, 4, 5], &[4, 0]);
        let batch = [&a, &b];

        let mut g = Graph::new();
        let loss = batch_loss_on(&model, &mut g, &batch).unwrap();
        model.params.zero_grads();
        g.backward(loss, &mut model.params).unwrap();
        let grads: Vec<Vec<f64>> = model
            .params
            .iter()
            .map(|p| p.tensor.grad().unwrap_or(&[]).to_vec())
            .collect();

        let h = 1e-4;
        let n_params = model.params.len();
        let mut checked = 0;
        for pid in 0..n_params {
            let len = model.params.tensor(pid).len();
            for &idx in &[0, len / 2, len - 1] {
                let orig = model.params.tensor(pid).values()[idx];
                model.params.tensor_mut(pid).values_mut()[idx] = orig + h;
                let up = supervised_loss(&model, &batch).unwrap();
                model.params.tensor_mut(pid).values_mut()[idx] = orig - h;
                let down = supervised_loss(&model, &batch).unwrap();
                model.params.tensor_mut(pid).values_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[pid][idx];
                let diff = (numeric - analytic).abs();
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                // Tiny gradients sit below the central-difference noise
                // floor, so accept close absolute agreement there too.
                assert!(
                    diff <= 1e-9 || diff / denom < 1e-4,
                    "param {pid}[{idx}]: numeric {numeric} vs analytic {analytic}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 3 * n_params);
    }

    #[test]
    fn loss_strictly_decreases_on_memorization_task() {
        let mut model = tiny_model(19);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let instances: Vec<TrainInstance> = (0..10)
            .map(|k| {
                use rand::Rng;
                let src: Vec<u32> = (0..3).map(|_| rng.gen_range(1..7)).collect();
                let mut prog: Vec<u32> = (0..3).map(|_| rng.gen_range(1..5)).collect();
                prog.push(0);
                inst(&format!("m{k}"), &src, &prog)
            })
            .collect();
        let batch: Vec<&TrainInstance> = instances.iter().collect();
        let opt = OptimConfig::default();
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let loss = supervised_step(&mut model, &batch, &opt).unwrap();
            assert!(loss < prev, "step {step}: loss {loss} did not drop below {prev}");
            prev = loss;
        }
    }

    #[test]
    fn update_changes_parameters_and_reduces_loss() {
        let mut model = tiny_model(23);
        let a = inst("a", &[1, 2], &[2, 3, 0]);
        let before = model.params.snapshot_values();
        let l0 = supervised_step(&mut model, &[&a], &OptimConfig::default()).unwrap();
        let after = model.params.snapshot_values();
        assert_ne!(before, after);
        let l1 = supervised_loss(&model, &[&a]).unwrap();
        assert!(l1 < l0);
    }
}
