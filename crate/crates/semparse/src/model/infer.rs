//! No-tape forward passes: encoding, step decoding, greedy and beam search.

use crate::autodiff::kernels;
use crate::error::ModelError;
use crate::model::{LstmIds, Seq2Seq, EOS_ID};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Hidden and cell vectors per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub h: Vec<Vec<S>>,
    pub c: Vec<Vec<S>>,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        LstmState {
            h: vec![vec![S::zero(); hidden]; layers],
            c: vec![vec![S::zero(); hidden]; layers],
        }
    }
}

/// Encoder output: top-layer states per source position plus the final
/// stacked state that seeds the decoder.
#[derive(Clone, Debug)]
pub struct Encoded<S> {
    pub top: Vec<Vec<S>>,
    pub state: LstmState<S>,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub state: LstmState<S>,
    pub finished: bool,
}

impl<S: Scalar> Hypothesis<S> {
    /// Predicted tokens without the trailing end-of-sequence marker.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&t) if t.0 == EOS_ID => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

enum CandSource {
    Frozen(usize),
    Open {
        beam_idx: usize,
        state_idx: usize,
        token: u32,
    },
}

impl<S: Scalar> Seq2Seq<S> {
    fn embedding(&self, pid: crate::autodiff::ParamId, row: usize) -> &[S] {
        let e = self.config.embed_size;
        &self.params.tensor(pid).values()[row * e..(row + 1) * e]
    }

    /// One step through an LSTM stack. `x` is the layer-0 input.
    fn lstm_stack(&self, stack: &[LstmIds], x: &[S], state: &LstmState<S>) -> LstmState<S> {
        let h = self.config.hidden_size;
        let mut next = LstmState {
            h: Vec::with_capacity(stack.len()),
            c: Vec::with_capacity(stack.len()),
        };
        let mut input = x.to_vec();
        for (l, ids) in stack.iter().enumerate() {
            let w = self.params.tensor(ids.w);
            let u = self.params.tensor(ids.u);
            let b = self.params.tensor(ids.b);
            let mut gates = kernels::matmul(&input, w.values(), 1, input.len(), 4 * h);
            let rec = kernels::matmul(&state.h[l], u.values(), 1, h, 4 * h);
            for i in 0..4 * h {
                gates[i] += rec[i] + b.values()[i];
            }
            let mut new_c = vec![S::zero(); h];
            let mut new_h = vec![S::zero(); h];
            for j in 0..h {
                let i_g = sigmoid_s(gates[j]);
                let f_g = sigmoid_s(gates[h + j]);
                let o_g = sigmoid_s(gates[2 * h + j]);
                let g_g = gates[3 * h + j].tanh();
                let c = f_g * state.c[l][j] + i_g * g_g;
                new_c[j] = c;
                new_h[j] = o_g * c.tanh();
            }
            input = new_h.clone();
            next.h.push(new_h);
            next.c.push(new_c);
        }
        next
    }

    /// Encodes a source token sequence. Inputs longer than `max_src_len` are
    /// truncated with a warning; empty inputs are a contract violation.
    pub fn encode(&self, src: &[TokenId]) -> Result<Encoded<S>, ModelError> {
        if src.is_empty() {
            return Err(ModelError::Contract("encode: empty source".to_string()));
        }
        let truncated = src.len() > self.config.max_src_len;
        if truncated {
            log::warn!(
                "source length {} exceeds max_src_len {}; truncating",
                src.len(),
                self.config.max_src_len
            );
        }
        let src = &src[..src.len().min(self.config.max_src_len)];
        let mut state = LstmState::zeros(self.config.num_layers, self.config.hidden_size);
        let mut top = Vec::with_capacity(src.len());
        for &tok in src {
            if tok.index() >= self.config.src_vocab_size {
                return Err(ModelError::Contract(format!(
                    "encode: token id {} out of vocabulary {}",
                    tok.0, self.config.src_vocab_size
                )));
            }
            let x = self.embedding(self.ids.emb_src, tok.index()).to_vec();
            state = self.lstm_stack(&self.ids.enc, &x, &state);
            top.push(state.h[self.config.num_layers - 1].clone());
        }
        Ok(Encoded {
            top,
            state,
            truncated,
        })
    }

    /// One decoder step. `prev` is `None` for the first step (the
    /// start-of-sequence input). Returns the log-probability row over the
    /// target vocabulary and the next state.
    pub fn decode_step(
        &self,
        prev: Option<TokenId>,
        state: &LstmState<S>,
        enc_top: &[Vec<S>],
    ) -> Result<(Vec<S>, LstmState<S>), ModelError> {
        let row = match prev {
            None => self.bos_row(),
            Some(t) => {
                if t.index() >= self.config.tgt_vocab_size {
                    return Err(ModelError::Contract(format!(
                        "decode_step: token id {} out of vocabulary {}",
                        t.0, self.config.tgt_vocab_size
                    )));
                }
                t.index()
            }
        };
        let x = self.embedding(self.ids.emb_tgt, row).to_vec();
        let next = self.lstm_stack(&self.ids.dec, &x, state);
        let h = &next.h[self.config.num_layers - 1];
        let hs = self.config.hidden_size;

        // Dot-product attention over top-layer encoder states.
        let scores: Vec<S> = enc_top
            .iter()
            .map(|e| (0..hs).map(|j| h[j] * e[j]).sum())
            .collect();
        let weights = kernels::softmax_row(&scores);
        let mut ctx = vec![S::zero(); hs];
        for (w, e) in weights.iter().zip(enc_top) {
            for j in 0..hs {
                ctx[j] += *w * e[j];
            }
        }

        let mut cat = Vec::with_capacity(2 * hs);
        cat.extend_from_slice(h);
        cat.extend_from_slice(&ctx);
        let w_att = self.params.tensor(self.ids.w_att);
        let b_att = self.params.tensor(self.ids.b_att);
        let mut proj = kernels::matmul(&cat, w_att.values(), 1, 2 * hs, hs);
        for j in 0..hs {
            proj[j] = (proj[j] + b_att.values()[j]).tanh();
        }

        let v = self.config.tgt_vocab_size;
        let w_out = self.params.tensor(self.ids.w_out);
        let b_out = self.params.tensor(self.ids.b_out);
        let mut logits = kernels::matmul(&proj, w_out.values(), 1, hs, v);
        for j in 0..v {
            logits[j] += b_out.values()[j];
        }
        Ok((kernels::log_softmax_row(&logits), next))
    }

    /// Greedy decoding: argmax token per step until end-of-sequence or the
    /// length cap. Ties break toward the lowest token id.
    pub fn greedy_decode(&self, src: &[TokenId]) -> Result<Hypothesis<S>, ModelError> {
        let enc = self.encode(src)?;
        let mut hyp = Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            state: enc.state.clone(),
            finished: false,
        };
        for _ in 0..self.config.max_tgt_len {
            let (logp, state) = self.decode_step(hyp.tokens.last().copied(), &hyp.state, &enc.top)?;
            let mut best = 0;
            for k in 1..logp.len() {
                if logp[k] > logp[best] {
                    best = k;
                }
            }
            hyp.tokens.push(TokenId(best as u32));
            hyp.log_prob += logp[best].to_f64_c();
            hyp.state = state;
            if best as u32 == EOS_ID {
                hyp.finished = true;
                break;
            }
        }
        Ok(hyp)
    }

    /// Length-synchronous beam search. Finished hypotheses are frozen and
    /// keep competing on cumulative log-probability (no length
    /// normalization). Halts when every hypothesis is finished or the
    /// length cap is reached; unfinished hypotheses are returned as-is.
    pub fn beam_search(
        &self,
        src: &[TokenId],
        width: usize,
    ) -> Result<Vec<Hypothesis<S>>, ModelError> {
        if width < 1 {
            return Err(ModelError::Config("beam width must be ≥ 1".to_string()));
        }
        let enc = self.encode(src)?;
        let mut beam = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            state: enc.state.clone(),
            finished: false,
        }];
        for _ in 0..self.config.max_tgt_len {
            if beam.iter().all(|h| h.finished) {
                break;
            }
            let mut cands: Vec<(f64, CandSource)> = Vec::new();
            let mut new_states: Vec<LstmState<S>> = Vec::new();
            for (i, h) in beam.iter().enumerate() {
                if h.finished {
                    cands.push((h.log_prob, CandSource::Frozen(i)));
                    continue;
                }
                let (logp, state) = self.decode_step(h.tokens.last().copied(), &h.state, &enc.top)?;
                let state_idx = new_states.len();
                new_states.push(state);
                for (k, lp) in logp.iter().enumerate() {
                    cands.push((
                        h.log_prob + lp.to_f64_c(),
                        CandSource::Open {
                            beam_idx: i,
                            state_idx,
                            token: k as u32,
                        },
                    ));
                }
            }
            cands.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite log-probs"));
            cands.truncate(width);
            beam = cands
                .into_iter()
                .map(|(lp, src)| match src {
                    CandSource::Frozen(i) => beam[i].clone(),
                    CandSource::Open {
                        beam_idx,
                        state_idx,
                        token,
                    } => {
                        let mut tokens = beam[beam_idx].tokens.clone();
                        tokens.push(TokenId(token));
                        Hypothesis {
                            tokens,
                            log_prob: lp,
                            state: new_states[state_idx].clone(),
                            finished: token == EOS_ID,
                        }
                    }
                })
                .collect();
        }
        beam.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).expect("finite log-probs"));
        Ok(beam)
    }

    /// Teacher-forced log-likelihood of a program that ends with the
    /// end-of-sequence token (Eq. 1 form: sum of per-step log-probs).
    pub fn sequence_log_prob(
        &self,
        src: &[TokenId],
        program: &[TokenId],
    ) -> Result<f64, ModelError> {
        if program.last().map(|t| t.0) != Some(EOS_ID) {
            return Err(ModelError::Contract(
                "sequence_log_prob: program must end with end-of-sequence".to_string(),
            ));
        }
        if program.len() > self.config.max_tgt_len {
            return Err(ModelError::Contract(format!(
                "sequence_log_prob: program length {} exceeds max_tgt_len {}",
                program.len(),
                self.config.max_tgt_len
            )));
        }
        let enc = self.encode(src)?;
        let mut state = enc.state.clone();
        let mut prev = None;
        let mut total = 0.0;
        for &tok in program {
            let (logp, next) = self.decode_step(prev, &state, &enc.top)?;
            total += logp[tok.index()].to_f64_c();
            state = next;
            prev = Some(tok);
        }
        Ok(total)
    }
}

fn sigmoid_s<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> Seq2Seq<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seq2Seq::new(ModelConfig::new(2, 8, 6, 7, 5), &mut rng).unwrap()
    }

    fn src(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    #[test]
    fn length_one_input_gives_one_state_per_layer() {
        let m = tiny_model(3);
        let enc = m.encode(&src(&[2])).unwrap();
        assert_eq!(enc.top.len(), 1);
        assert_eq!(enc.state.h.len(), 2);
        assert_eq!(enc.state.h[0].len(), 8);
        assert!(!enc.truncated);
    }

    #[test]
    fn encoding_is_deterministic() {
        let m = tiny_model(4);
        let a = m.encode(&src(&[1, 2, 3])).unwrap();
        let b = m.encode(&src(&[1, 2, 3])).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.top, b.top);
    }

    #[test]
    fn over_length_input_is_truncated_not_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = ModelConfig::new(1, 4, 3, 5, 4);
        cfg.max_src_len = 3;
        let m = Seq2Seq::<f64>::new(cfg, &mut rng).unwrap();
        let enc = m.encode(&src(&[0, 1, 2, 3, 4])).unwrap();
        assert!(enc.truncated);
        assert_eq!(enc.top.len(), 3);
        let same = m.encode(&src(&[0, 1, 2])).unwrap();
        assert_eq!(enc.state, same.state);
    }

    #[test]
    fn decode_distribution_is_normalized() {
        let m = tiny_model(6);
        let enc = m.encode(&src(&[0, 3])).unwrap();
        let (logp, _) = m.decode_step(None, &enc.state, &enc.top).unwrap();
        let total: f64 = logp.iter().map(|&lp| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(logp.len(), 5);
    }

    #[test]
    fn beam_one_equals_greedy() {
        for seed in [1, 2, 3, 4, 5] {
            let m = tiny_model(seed);
            let input = src(&[seed as u32 % 7, (seed as u32 + 1) % 7]);
            let greedy = m.greedy_decode(&input).unwrap();
            let beam = m.beam_search(&input, 1).unwrap();
            assert_eq!(beam[0].tokens, greedy.tokens);
            assert!((beam[0].log_prob - greedy.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_best_dominates_greedy_and_is_monotone_in_width() {
        for seed in [11, 12, 13] {
            let m = tiny_model(seed);
            let input = src(&[1, 4, 2]);
            let greedy = m.greedy_decode(&input).unwrap();
            let mut prev_best = f64::NEG_INFINITY;
            for width in [1, 2, 5, 10] {
                let beam = m.beam_search(&input, width).unwrap();
                assert!(beam[0].log_prob >= greedy.log_prob - 1e-12);
                assert!(beam[0].log_prob >= prev_best - 1e-12);
                assert!(beam.len() <= width);
                for w in beam.windows(2) {
                    assert!(w[0].log_prob >= w[1].log_prob);
                }
                prev_best = beam[0].log_prob;
            }
        }
    }

    #[test]
    fn beam_log_probs_match_teacher_forced_rescoring() {
        let m = tiny_model(21);
        let input = src(&[2, 5, 1]);
        let beam = m.beam_search(&input, 5).unwrap();
        for hyp in beam.iter().filter(|h| h.finished) {
            let rescored = m.sequence_log_prob(&input, &hyp.tokens).unwrap();
            assert!(
                (rescored - hyp.log_prob).abs() < 1e-9,
                "beam {} vs rescored {rescored}",
                hyp.log_prob
            );
        }
    }

    #[test]
    fn sequence_log_prob_contract_checks() {
        let m = tiny_model(30);
        let input = src(&[1]);
        // missing end-of-sequence
        assert!(m.sequence_log_prob(&input, &src(&[1, 2])).is_err());
        // valid program is a log of a probability
        let lp = m.sequence_log_prob(&input, &src(&[1, 2, EOS_ID])).unwrap();
        assert!(lp < 0.0);
        assert!(lp.exp() <= 1.0 && lp.exp() > 0.0);
    }

    #[test]
    fn empty_source_is_a_contract_violation() {
        let m = tiny_model(31);
        assert!(m.encode(&[]).is_err());
    }

    #[test]
    fn zero_beam_width_is_a_config_error() {
        let m = tiny_model(32);
        assert!(matches!(
            m.beam_search(&src(&[1]), 0),
            Err(ModelError::Config(_))
        ));
    }
}
