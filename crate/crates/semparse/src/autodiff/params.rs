//! Named parameter tensors with gradient slots and optimizer state.

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::tensor::Tensor;
use crate::error::AutodiffError;
use crate::scalar::Scalar;

/// Index of a parameter inside its [`ParamStore`].
pub type ParamId = usize;

/// Default RMSprop learning rate.
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
/// Default RMSprop decay for the squared-gradient cache.
pub const DEFAULT_DECAY: f64 = 0.9;
/// Default RMSprop denominator fuzz.
pub const DEFAULT_EPS: f64 = 1e-8;
/// Global gradient-norm clip applied by the trainers before each update.
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct Param<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    /// RMSprop per-element squared-gradient cache.
    cache: Vec<S>,
}

/// Ordered collection of named learnable tensors. Iteration order is
/// insertion order, which keeps updates and serialization deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    params: Vec<Param<S>>,
    by_name: HashMap<String, ParamId>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<S>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.params.len();
        let cache = vec![S::zero(); tensor.len()];
        self.params.push(Param {
            name: name.to_string(),
            tensor,
            cache,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// New parameter initialized uniformly in `(-scale, scale)`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let values: Vec<S> = (0..n)
            .map(|_| S::from_f64_c(rng.gen_range(-scale..scale)))
            .collect();
        self.add(name, Tensor::new(shape, values).expect("consistent shape"))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id].tensor
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.zero_grad();
        }
    }

    pub fn grad_l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for p in &self.params {
            if let Some(g) = p.tensor.grad() {
                for v in g {
                    let v = v.to_f64_c();
                    acc += v * v;
                }
            }
        }
        acc.sqrt()
    }

    /// Scales all gradients so the global L2 norm is at most `max_norm`.
    pub fn clip_global_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_l2_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = S::from_f64_c(max_norm / norm);
            for p in &mut self.params {
                if p.tensor.grad().is_some() {
                    for v in p.tensor.grad_mut() {
                        *v *= scale;
                    }
                }
            }
        }
    }

    /// Snapshot of parameter values only (no grads, no optimizer state).
    pub fn snapshot_values(&self) -> Vec<Vec<S>> {
        self.params.iter().map(|p| p.tensor.values().to_vec()).collect()
    }

    pub fn restore_values(&mut self, snapshot: &[Vec<S>]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, vals) in self.params.iter_mut().zip(snapshot) {
            p.tensor.values_mut().copy_from_slice(vals);
        }
    }
}

/// One RMSprop step over every parameter with a populated gradient:
/// `c ← decay·c + (1−decay)·g²` then `p ← p − lr·g/√(c+eps)`.
pub fn rmsprop_update<S: Scalar>(
    store: &mut ParamStore<S>,
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<(), AutodiffError> {
    if lr <= 0.0 {
        return Err(AutodiffError::Config(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let lr = S::from_f64_c(lr);
    let decay = S::from_f64_c(decay);
    let keep = S::one() - decay;
    let eps = S::from_f64_c(eps);
    for p in &mut store.params {
        let Some(grad) = p.tensor.grad() else { continue };
        let grad = grad.to_vec();
        for (i, g) in grad.iter().enumerate() {
            let c = decay * p.cache[i] + keep * *g * *g;
            p.cache[i] = c;
            let step = lr * *g / (c + eps).sqrt();
            p.tensor.values_mut()[i] = p.tensor.values()[i] - step;
        }
    }
    Ok(())
}
