//! Attention-based LSTM sequence-to-sequence parser.
//!
//! Two forward paths share the same parameters and arithmetic kernels: a
//! no-tape path for decoding (greedy/beam) and a recording path for
//! teacher-forced scoring with gradients. A consistency oracle in the tests
//! pins them to each other.

pub mod checkpoint;
pub mod infer;
pub mod tape;

pub use checkpoint::{Checkpoint, ParserBundle};
pub use infer::{Encoded, Hypothesis, LstmState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{ParamId, ParamStore};
use crate::error::ModelError;
use crate::scalar::Scalar;

/// Parameter initialization half-range.
pub const INIT_SCALE: f64 = 0.08;

/// By convention the end-of-sequence token has id 0 in every target
/// vocabulary (see `Vocab::target_from_kbs`); the decoder relies on it.
pub const EOS_ID: u32 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub embed_size: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
}

impl ModelConfig {
    pub fn new(
        num_layers: usize,
        hidden_size: usize,
        embed_size: usize,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
    ) -> Self {
        ModelConfig {
            num_layers,
            hidden_size,
            embed_size,
            src_vocab_size,
            tgt_vocab_size,
            max_src_len: 50,
            max_tgt_len: 35,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("embed_size", self.embed_size),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Input width of layer `l` of either stack.
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.embed_size
        } else {
            self.hidden_size
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LstmIds {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamIds {
    pub emb_src: ParamId,
    /// Target embeddings with one extra final row: the decoder's
    /// start-of-sequence input, which is not a predictable token.
    pub emb_tgt: ParamId,
    pub enc: Vec<LstmIds>,
    pub dec: Vec<LstmIds>,
    pub w_att: ParamId,
    pub b_att: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

pub struct Seq2Seq<S> {
    pub config: ModelConfig,
    pub params: ParamStore<S>,
    pub(crate) ids: ParamIds,
}

impl<S: Scalar> Seq2Seq<S> {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let (h, e) = (config.hidden_size, config.embed_size);
        let mut params = ParamStore::new();
        let emb_src = params.add_uniform(
            "emb_src",
            vec![config.src_vocab_size, e],
            INIT_SCALE,
            rng,
        );
        let emb_tgt = params.add_uniform(
            "emb_tgt",
            vec![config.tgt_vocab_size + 1, e],
            INIT_SCALE,
            rng,
        );
        let mut lstm = |prefix: &str, params: &mut ParamStore<S>| -> Vec<LstmIds> {
            (0..config.num_layers)
                .map(|l| {
                    let input = config.layer_input(l);
                    LstmIds {
                        w: params.add_uniform(
                            &format!("{prefix}.l{l}.w"),
                            vec![input, 4 * h],
                            INIT_SCALE,
                            rng,
                        ),
                        u: params.add_uniform(
                            &format!("{prefix}.l{l}.u"),
                            vec![h, 4 * h],
                            INIT_SCALE,
                            rng,
                        ),
                        b: params.add_uniform(
                            &format!("{prefix}.l{l}.b"),
                            vec![1, 4 * h],
                            INIT_SCALE,
                            rng,
                        ),
                    }
                })
                .collect()
        };
        let enc = lstm("enc", &mut params);
        let dec = lstm("dec", &mut params);
        let w_att = params.add_uniform("att.w", vec![2 * h, h], INIT_SCALE, rng);
        let b_att = params.add_uniform("att.b", vec![1, h], INIT_SCALE, rng);
        let w_out = params.add_uniform("out.w", vec![h, config.tgt_vocab_size], INIT_SCALE, rng);
        let b_out = params.add_uniform("out.b", vec![1, config.tgt_vocab_size], INIT_SCALE, rng);
        Ok(Seq2Seq {
            config,
            params,
            ids: ParamIds {
                emb_src,
                emb_tgt,
                enc,
                dec,
                w_att,
                b_att,
                w_out,
                b_out,
            },
        })
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.value_count()
    }

    /// Row of the target embedding table used for the start-of-sequence
    /// decoder input.
    pub(crate) fn bos_row(&self) -> usize {
        self.config.tgt_vocab_size
    }
}
