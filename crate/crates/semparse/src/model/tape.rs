//! Recording forward passes: the same arithmetic as `infer`, built on the
//! autodiff tape so teacher-forced losses can be differentiated.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::ParamId;
use crate::error::ModelError;
use crate::model::{LstmIds, Seq2Seq, EOS_ID};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Tape nodes for an encoded source: the top-layer state matrix `[n, H]`
/// and the final hidden/cell node per layer.
pub struct TapeEncoded {
    pub top: NodeId,
    pub h: Vec<NodeId>,
    pub c: Vec<NodeId>,
}

/// Node handles for the parameters referenced on one tape. Recorded once so
/// every use of a weight shares a node (gradient contributions sum there).
struct TapeParams {
    emb_tgt: NodeId,
    dec: Vec<(NodeId, NodeId, NodeId)>,
    w_att: NodeId,
    b_att: NodeId,
    w_out: NodeId,
    b_out: NodeId,
}

impl<S: Scalar> Seq2Seq<S> {
    fn param_node(&self, g: &mut Graph<S>, id: ParamId) -> NodeId {
        g.param(&self.params, id)
    }

    fn lstm_stack_on(
        &self,
        g: &mut Graph<S>,
        stack_ids: &[LstmIds],
        stack_nodes: &[(NodeId, NodeId, NodeId)],
        x: NodeId,
        h_prev: &[NodeId],
        c_prev: &[NodeId],
    ) -> Result<(Vec<NodeId>, Vec<NodeId>), ModelError> {
        debug_assert_eq!(stack_ids.len(), stack_nodes.len());
        let hs = self.config.hidden_size;
        let mut input = x;
        let mut new_h = Vec::with_capacity(stack_ids.len());
        let mut new_c = Vec::with_capacity(stack_ids.len());
        for (l, &(w, u, b)) in stack_nodes.iter().enumerate() {
            let xw = g.matmul(input, w)?;
            let hu = g.matmul(h_prev[l], u)?;
            let pre = g.add(xw, hu)?;
            let gates = g.add(pre, b)?;
            let i_g = g.slice_cols(gates, 0, hs)?;
            let f_g = g.slice_cols(gates, hs, 2 * hs)?;
            let o_g = g.slice_cols(gates, 2 * hs, 3 * hs)?;
            let g_g = g.slice_cols(gates, 3 * hs, 4 * hs)?;
            let i_s = g.sigmoid(i_g);
            let f_s = g.sigmoid(f_g);
            let o_s = g.sigmoid(o_g);
            let g_t = g.tanh(g_g);
            let keep = g.mul(f_s, c_prev[l])?;
            let write = g.mul(i_s, g_t)?;
            let c = g.add(keep, write)?;
            let c_t = g.tanh(c);
            let h = g.mul(o_s, c_t)?;
            input = h;
            new_h.push(h);
            new_c.push(c);
        }
        Ok((new_h, new_c))
    }

    /// Records the encoder over `src` (already truncated/validated by the
    /// caller or short by construction).
    pub fn encode_on(&self, g: &mut Graph<S>, src: &[TokenId]) -> Result<TapeEncoded, ModelError> {
        if src.is_empty() {
            return Err(ModelError::Contract("encode_on: empty source".to_string()));
        }
        let src = &src[..src.len().min(self.config.max_src_len)];
        let hs = self.config.hidden_size;
        let layers = self.config.num_layers;
        let emb_src = self.param_node(g, self.ids.emb_src);
        let enc_nodes: Vec<(NodeId, NodeId, NodeId)> = self
            .ids
            .enc
            .iter()
            .map(|ids| {
                (
                    self.param_node(g, ids.w),
                    self.param_node(g, ids.u),
                    self.param_node(g, ids.b),
                )
            })
            .collect();
        let zero = g.constant(crate::autodiff::Tensor::zeros(vec![1, hs]));
        let mut h: Vec<NodeId> = vec![zero; layers];
        let mut c: Vec<NodeId> = vec![zero; layers];
        let mut top_rows = Vec::with_capacity(src.len());
        for &tok in src {
            if tok.index() >= self.config.src_vocab_size {
                return Err(ModelError::Contract(format!(
                    "encode_on: token id {} out of vocabulary {}",
                    tok.0, self.config.src_vocab_size
                )));
            }
            let x = g.select_row(emb_src, tok.index())?;
            let (nh, nc) = self.lstm_stack_on(g, &self.ids.enc, &enc_nodes, x, &h, &c)?;
            h = nh;
            c = nc;
            top_rows.push(h[layers - 1]);
        }
        let top = g.concat_rows(top_rows)?;
        Ok(TapeEncoded { top, h, c })
    }

    fn tape_params(&self, g: &mut Graph<S>) -> TapeParams {
        TapeParams {
            emb_tgt: self.param_node(g, self.ids.emb_tgt),
            dec: self
                .ids
                .dec
                .iter()
                .map(|ids| {
                    (
                        self.param_node(g, ids.w),
                        self.param_node(g, ids.u),
                        self.param_node(g, ids.b),
                    )
                })
                .collect(),
            w_att: self.param_node(g, self.ids.w_att),
            b_att: self.param_node(g, self.ids.b_att),
            w_out: self.param_node(g, self.ids.w_out),
            b_out: self.param_node(g, self.ids.b_out),
        }
    }

    fn decode_step_on(
        &self,
        g: &mut Graph<S>,
        tp: &TapeParams,
        enc: &TapeEncoded,
        prev_row: usize,
        h: &[NodeId],
        c: &[NodeId],
    ) -> Result<(NodeId, Vec<NodeId>, Vec<NodeId>), ModelError> {
        let x = g.select_row(tp.emb_tgt, prev_row)?;
        let (nh, nc) = self.lstm_stack_on(g, &self.ids.dec, &tp.dec, x, h, c)?;
        let top_h = nh[self.config.num_layers - 1];
        let scores = g.matmul_nt(top_h, enc.top)?;
        let weights = g.softmax(scores);
        let ctx = g.matmul(weights, enc.top)?;
        let cat = g.concat_cols(top_h, ctx)?;
        let pre = g.matmul(cat, tp.w_att)?;
        let pre = g.add(pre, tp.b_att)?;
        let proj = g.tanh(pre);
        let logits = g.matmul(proj, tp.w_out)?;
        let logits = g.add(logits, tp.b_out)?;
        Ok((logits, nh, nc))
    }

    /// Teacher-forces the decoder along `prefix`, recording one logits node
    /// per step: step `t` conditions on `prefix[..t]` and scores the
    /// distribution from which `prefix[t]` would be drawn.
    pub fn decode_tf_on(
        &self,
        g: &mut Graph<S>,
        enc: &TapeEncoded,
        prefix: &[TokenId],
    ) -> Result<Vec<NodeId>, ModelError> {
        if prefix.len() > self.config.max_tgt_len {
            return Err(ModelError::Contract(format!(
                "decode_tf_on: prefix length {} exceeds max_tgt_len {}",
                prefix.len(),
                self.config.max_tgt_len
            )));
        }
        let tp = self.tape_params(g);
        let mut h = enc.h.clone();
        let mut c = enc.c.clone();
        let mut prev_row = self.bos_row();
        let mut logits = Vec::with_capacity(prefix.len());
        for &tok in prefix {
            if tok.index() >= self.config.tgt_vocab_size {
                return Err(ModelError::Contract(format!(
                    "decode_tf_on: token id {} out of vocabulary {}",
                    tok.0, self.config.tgt_vocab_size
                )));
            }
            let (step_logits, nh, nc) = self.decode_step_on(g, &tp, enc, prev_row, &h, &c)?;
            logits.push(step_logits);
            h = nh;
            c = nc;
            prev_row = tok.index();
        }
        Ok(logits)
    }

    /// Scalar negative log-likelihood node of a program (which must end in
    /// end-of-sequence): the sum of per-step cross-entropies against the
    /// one-hot program tokens. `-item` of the result is the log-probability.
    pub fn sequence_nll_on(
        &self,
        g: &mut Graph<S>,
        enc: &TapeEncoded,
        program: &[TokenId],
    ) -> Result<NodeId, ModelError> {
        if program.last().map(|t| t.0) != Some(EOS_ID) {
            return Err(ModelError::Contract(
                "sequence_nll_on: program must end with end-of-sequence".to_string(),
            ));
        }
        let logits = self.decode_tf_on(g, enc, program)?;
        let v = self.config.tgt_vocab_size;
        let mut total: Option<NodeId> = None;
        for (node, &tok) in logits.iter().zip(program) {
            let mut target = vec![S::zero(); v];
            target[tok.index()] = S::one();
            let step = g.softmax_xent(*node, target)?;
            total = Some(match total {
                None => step,
                Some(t) => g.add(t, step)?,
            });
        }
        Ok(total.expect("program has at least the end-of-sequence token"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::ParamStore;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> Seq2Seq<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seq2Seq::new(ModelConfig::new(2, 8, 6, 7, 5), &mut rng).unwrap()
    }

    fn toks(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    #[test]
    fn tape_log_prob_matches_eval_path() {
        let m = tiny_model(40);
        let src = toks(&[1, 4, 2]);
        let program = toks(&[3, 1, 2, EOS_ID]);
        let eval_lp = m.sequence_log_prob(&src, &program).unwrap();
        let mut g = Graph::new();
        let enc = m.encode_on(&mut g, &src).unwrap();
        let nll = m.sequence_nll_on(&mut g, &enc, &program).unwrap();
        let tape_lp = -g.item(nll);
        assert!(
            (eval_lp - tape_lp).abs() < 1e-9,
            "eval {eval_lp} vs tape {tape_lp}"
        );
    }

    #[test]
    fn tape_step_distributions_match_eval_decode_step() {
        let m = tiny_model(41);
        let src = toks(&[0, 6]);
        let prefix = toks(&[2, 4, EOS_ID]);
        // eval path distributions
        let enc = m.encode(&src).unwrap();
        let mut state = enc.state.clone();
        let mut prev = None;
        let mut eval_rows = Vec::new();
        for &t in &prefix {
            let (logp, ns) = m.decode_step(prev, &state, &enc.top).unwrap();
            eval_rows.push(logp);
            state = ns;
            prev = Some(t);
        }
        // tape path logits
        let mut g = Graph::new();
        let tenc = m.encode_on(&mut g, &src).unwrap();
        let nodes = m.decode_tf_on(&mut g, &tenc, &prefix).unwrap();
        for (node, eval_row) in nodes.iter().zip(&eval_rows) {
            let logits = g.value(*node).values();
            let tape_row = crate::autodiff::kernels::log_softmax_row(logits);
            for (a, b) in tape_row.iter().zip(eval_row) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn end_to_end_gradients_pass_finite_difference_checks() {
        // Spot-check a few entries of every parameter tensor on the full
        // model loss; the exhaustive sweep lives in the acceptance suite.
        let m = tiny_model(42);
        let src = toks(&[1, 2]);
        let program = toks(&[3, EOS_ID]);

        let loss_of = |params: &ParamStore<f64>| -> f64 {
            let probe = Seq2Seq {
                config: m.config.clone(),
                params: params.clone(),
                ids: m.ids.clone(),
            };
            let mut g = Graph::new();
            let enc = probe.encode_on(&mut g, &src).unwrap();
            let nll = probe.sequence_nll_on(&mut g, &enc, &program).unwrap();
            g.item(nll)
        };

        let mut params = m.params.clone();
        params.zero_grads();
        {
            let probe = Seq2Seq {
                config: m.config.clone(),
                params: params.clone(),
                ids: m.ids.clone(),
            };
            let mut g = Graph::new();
            let enc = probe.encode_on(&mut g, &src).unwrap();
            let nll = probe.sequence_nll_on(&mut g, &enc, &program).unwrap();
            g.backward(nll, &mut params).unwrap();
        }
        let h = 1e-4;
        for pid in 0..params.len() {
            let n = params.tensor(pid).len();
            // probe first, middle, last entries of each tensor
            for &i in &[0, n / 2, n - 1] {
                let orig = params.tensor(pid).values()[i];
                params.tensor_mut(pid).values_mut()[i] = orig + h;
                let plus = loss_of(&params);
                params.tensor_mut(pid).values_mut()[i] = orig - h;
                let minus = loss_of(&params);
                params.tensor_mut(pid).values_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = params.tensor(pid).grad().map(|g| g[i]).unwrap_or(0.0);
                let denom = numeric.abs().max(analytic.abs()).max(1.0);
                assert!(
                    (numeric - analytic).abs() / denom <= 1e-4,
                    "param {} entry {i}: numeric {numeric} vs analytic {analytic}",
                    params.get(pid).name
                );
            }
        }
    }

    #[test]
    fn nll_requires_end_of_sequence() {
        let m = tiny_model(43);
        let mut g = Graph::new();
        let enc = m.encode_on(&mut g, &toks(&[1])).unwrap();
        assert!(m.sequence_nll_on(&mut g, &enc, &toks(&[1, 2])).is_err());
    }
}
