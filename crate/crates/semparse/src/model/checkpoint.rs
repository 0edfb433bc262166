//! Versioned JSON checkpoints: model config, vocabularies with integrity
//! hashes, and every parameter tensor, value-exact on round trip.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{ModelConfig, Seq2Seq};
use crate::scalar::Scalar;
use crate::vocab::Vocab;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    /// Domains the model was trained on (one for a teacher, all for the
    /// unified student). Evaluation scope, not a model input.
    pub domains: Vec<String>,
    pub src_vocab: Vec<String>,
    pub tgt_vocab: Vec<String>,
    pub src_vocab_sha256: String,
    pub tgt_vocab_sha256: String,
    pub parameters: BTreeMap<String, ParamEntry>,
}

/// A model plus everything needed to run it: vocabularies and the domain
/// list. The unit that checkpoints serialize.
pub struct ParserBundle<S> {
    pub model: Seq2Seq<S>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub domains: Vec<String>,
}

impl<S: Scalar> ParserBundle<S> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut parameters = BTreeMap::new();
        for p in self.model.params.iter() {
            parameters.insert(
                p.name.clone(),
                ParamEntry {
                    shape: p.tensor.shape().to_vec(),
                    values: p.tensor.values().iter().map(|v| v.to_f64_c()).collect(),
                },
            );
        }
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model_config: self.model.config.clone(),
            domains: self.domains.clone(),
            src_vocab: self.src_vocab.tokens().to_vec(),
            tgt_vocab: self.tgt_vocab.tokens().to_vec(),
            src_vocab_sha256: self.src_vocab.sha256_hex(),
            tgt_vocab_sha256: self.tgt_vocab.sha256_hex(),
            parameters,
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self, ModelError> {
        if cp.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::CheckpointIo(format!(
                "unsupported format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                cp.format_version
            )));
        }
        let src_vocab = Vocab::new(cp.src_vocab);
        let tgt_vocab = Vocab::new(cp.tgt_vocab);
        for (side, stored, actual) in [
            ("source", &cp.src_vocab_sha256, src_vocab.sha256_hex()),
            ("target", &cp.tgt_vocab_sha256, tgt_vocab.sha256_hex()),
        ] {
            if stored != &actual {
                return Err(ModelError::VocabMismatch {
                    side,
                    expected: stored.clone(),
                    actual,
                });
            }
        }
        if src_vocab.len() != cp.model_config.src_vocab_size
            || tgt_vocab.len() != cp.model_config.tgt_vocab_size
        {
            return Err(ModelError::CheckpointIo(format!(
                "vocab sizes {}/{} disagree with model config {}/{}",
                src_vocab.len(),
                tgt_vocab.len(),
                cp.model_config.src_vocab_size,
                cp.model_config.tgt_vocab_size
            )));
        }
        // Values are overwritten below; the seed only shapes the store.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Seq2Seq::<S>::new(cp.model_config.clone(), &mut rng)?;
        for pid in 0..model.params.len() {
            let name = model.params.get(pid).name.clone();
            let entry = cp.parameters.get(&name).ok_or_else(|| {
                ModelError::CheckpointIo(format!("missing parameter {name}"))
            })?;
            let tensor = model.params.tensor_mut(pid);
            if entry.shape != tensor.shape() {
                return Err(ModelError::CheckpointIo(format!(
                    "parameter {name}: stored shape {:?}, expected {:?}",
                    entry.shape,
                    tensor.shape()
                )));
            }
            for (slot, v) in tensor.values_mut().iter_mut().zip(&entry.values) {
                *slot = S::from_f64_c(*v);
            }
        }
        if cp.parameters.len() != model.params.len() {
            return Err(ModelError::CheckpointIo(format!(
                "checkpoint has {} parameters, model expects {}",
                cp.parameters.len(),
                model.params.len()
            )));
        }
        Ok(ParserBundle {
            model,
            src_vocab,
            tgt_vocab,
            domains: cp.domains,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| ModelError::CheckpointIo(format!("serialize: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| ModelError::CheckpointIo(format!("write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::CheckpointIo(format!("read {}: {e}", path.display())))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| ModelError::CheckpointIo(format!("parse {}: {e}", path.display())))?;
        Self::from_checkpoint(cp)
    }
}
