//! Define-by-run reverse-mode differentiation over row-major tensors.
//!
//! Recording an operation computes its forward value immediately and appends
//! a node to the tape. `backward` walks the tape in reverse, keeping node
//! gradients local to the call and accumulating parameter gradients into the
//! owning [`ParamStore`].

use crate::autodiff::kernels;
use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tensor::Tensor;
use crate::error::AutodiffError;
use crate::scalar::Scalar;

/// Index of a node on the tape.
pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op<S> {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ` without materializing the transpose.
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    /// Row-wise softmax.
    Softmax(NodeId),
    SelectRow(NodeId, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    Sum(NodeId),
    Scale(NodeId, S),
    /// Scalar loss `−Σ target·log_softmax(logits)` for a single-row logits
    /// node and a fixed target distribution.
    SoftmaxXent { logits: NodeId, target: Vec<S> },
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
}

/// A recording tape. Build one per scored sequence and drop it afterwards.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id].value
    }

    /// The single entry of a scalar node.
    pub fn item(&self, id: NodeId) -> S {
        self.nodes[id].value.item()
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    fn val(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id].value
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            lhs: self.val(a).shape().to_vec(),
            rhs: self.val(b).shape().to_vec(),
        }
    }

    pub fn constant(&mut self, t: Tensor<S>) -> NodeId {
        self.push(Op::Constant, t)
    }

    /// Leaf referencing a store parameter; copies its current values.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> NodeId {
        let t = store.tensor(id).clone_values();
        self.push(Op::Param(id), t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (m, k) = (self.val(a).rows(), self.val(a).cols());
        let (k2, n) = (self.val(b).rows(), self.val(b).cols());
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let out = kernels::matmul(self.val(a).values(), self.val(b).values(), m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (m, k) = (self.val(a).rows(), self.val(a).cols());
        let (n, k2) = (self.val(b).rows(), self.val(b).cols());
        if k != k2 {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let out = kernels::matmul_nt(self.val(a).values(), self.val(b).values(), m, k, n);
        Ok(self.push(Op::MatMulNT(a, b), Tensor::new(vec![m, n], out)?))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.val(a).shape() != self.val(b).shape() {
            return Err(self.mismatch("add", a, b));
        }
        let out: Vec<S> = self
            .val(a)
            .values()
            .iter()
            .zip(self.val(b).values())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.val(a).shape().to_vec();
        Ok(self.push(Op::Add(a, b), Tensor::new(shape, out)?))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.val(a).shape() != self.val(b).shape() {
            return Err(self.mismatch("mul", a, b));
        }
        let out: Vec<S> = self
            .val(a)
            .values()
            .iter()
            .zip(self.val(b).values())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.val(a).shape().to_vec();
        Ok(self.push(Op::Mul(a, b), Tensor::new(shape, out)?))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = kernels::tanh(self.val(x).values());
        let shape = self.val(x).shape().to_vec();
        self.push(Op::Tanh(x), Tensor::new(shape, out).expect("same shape"))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = kernels::sigmoid(self.val(x).values());
        let shape = self.val(x).shape().to_vec();
        self.push(Op::Sigmoid(x), Tensor::new(shape, out).expect("same shape"))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = (self.val(x).rows(), self.val(x).cols());
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            out.extend(kernels::softmax_row(
                &self.val(x).values()[r * cols..(r + 1) * cols],
            ));
        }
        let shape = self.val(x).shape().to_vec();
        self.push(Op::Softmax(x), Tensor::new(shape, out).expect("same shape"))
    }

    pub fn select_row(&mut self, src: NodeId, row: usize) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = (self.val(src).rows(), self.val(src).cols());
        if row >= rows {
            return Err(AutodiffError::Contract(format!(
                "select_row: row {row} out of range for {rows} rows"
            )));
        }
        let out = self.val(src).values()[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Op::SelectRow(src, row), Tensor::new(vec![1, cols], out)?))
    }

    pub fn slice_cols(
        &mut self,
        src: NodeId,
        from: usize,
        to: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = (self.val(src).rows(), self.val(src).cols());
        if from >= to || to > cols {
            return Err(AutodiffError::Contract(format!(
                "slice_cols: range {from}..{to} invalid for {cols} columns"
            )));
        }
        let width = to - from;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&self.val(src).values()[r * cols + from..r * cols + to]);
        }
        Ok(self.push(
            Op::SliceCols(src, from, to),
            Tensor::new(vec![rows, width], out)?,
        ))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (ra, ca) = (self.val(a).rows(), self.val(a).cols());
        let (rb, cb) = (self.val(b).rows(), self.val(b).cols());
        if ra != rb {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(&self.val(a).values()[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&self.val(b).values()[r * cb..(r + 1) * cb]);
        }
        Ok(self.push(
            Op::ConcatCols(a, b),
            Tensor::new(vec![ra, ca + cb], out)?,
        ))
    }

    /// Stacks nodes with equal column counts into one matrix, in order.
    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> Result<NodeId, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::Contract(
                "concat_rows: empty part list".to_string(),
            ));
        }
        let cols = self.val(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in &parts {
            if self.val(p).cols() != cols {
                return Err(self.mismatch("concat_rows", parts[0], p));
            }
            rows += self.val(p).rows();
            out.extend_from_slice(self.val(p).values());
        }
        Ok(self.push(Op::ConcatRows(parts), Tensor::new(vec![rows, cols], out)?))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: S = self.val(x).values().iter().copied().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Multiplication by a constant that stays outside the gradient.
    pub fn scale(&mut self, x: NodeId, c: S) -> NodeId {
        let out: Vec<S> = self.val(x).values().iter().map(|&v| v * c).collect();
        let shape = self.val(x).shape().to_vec();
        self.push(Op::Scale(x, c), Tensor::new(shape, out).expect("same shape"))
    }

    /// Cross entropy of a fixed distribution against `softmax(logits)`:
    /// `−Σ target·log_softmax(logits)`. The logits node must be a single row
    /// and the target must be a distribution over its columns.
    pub fn softmax_xent(
        &mut self,
        logits: NodeId,
        target: Vec<S>,
    ) -> Result<NodeId, AutodiffError> {
        let (rows, cols) = (self.val(logits).rows(), self.val(logits).cols());
        if rows != 1 || target.len() != cols {
            return Err(AutodiffError::Contract(format!(
                "softmax_xent: logits [{rows},{cols}] vs target of length {}",
                target.len()
            )));
        }
        let sum: f64 = target.iter().map(|t| t.to_f64_c()).sum();
        let tol = (S::epsilon().to_f64_c() * cols as f64 * 8.0).max(1e-9);
        if (sum - 1.0).abs() > tol {
            return Err(AutodiffError::Contract(format!(
                "softmax_xent: target sums to {sum}, expected 1"
            )));
        }
        if target.iter().any(|t| t.to_f64_c() < -tol) {
            return Err(AutodiffError::Contract(
                "softmax_xent: target has a negative entry".to_string(),
            ));
        }
        let logp = kernels::log_softmax_row(self.val(logits).values());
        let loss = -target
            .iter()
            .zip(&logp)
            .map(|(&t, &lp)| t * lp)
            .sum::<S>();
        Ok(self.push(Op::SoftmaxXent { logits, target }, Tensor::scalar(loss)))
    }

    /// Reverse pass from a scalar loss node. Node gradients are fresh per
    /// call; parameter gradients accumulate into `store`.
    pub fn backward(
        &self,
        loss: NodeId,
        store: &mut ParamStore<S>,
    ) -> Result<(), AutodiffError> {
        if loss >= self.nodes.len() {
            return Err(AutodiffError::Contract(format!(
                "backward: node {loss} not on tape"
            )));
        }
        if !self.nodes[loss].value.is_scalar() {
            return Err(AutodiffError::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss + 1];
        grads[loss] = Some(vec![S::one()]);

        for id in (0..=loss).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    store.tensor_mut(*pid).add_to_grad(&dy);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.val(*a).rows(), self.val(*a).cols());
                    let n = self.val(*b).cols();
                    let da = kernels::matmul_nt(&dy, self.val(*b).values(), m, n, k);
                    let db = kernels::matmul_tn(self.val(*a).values(), &dy, m, k, n);
                    accum(&mut grads, *a, &da, self.val(*a).len());
                    accum(&mut grads, *b, &db, self.val(*b).len());
                }
                Op::MatMulNT(a, b) => {
                    let (m, k) = (self.val(*a).rows(), self.val(*a).cols());
                    let n = self.val(*b).rows();
                    // c = a·bᵀ: da = dc·b, db = dcᵀ·a
                    let da = kernels::matmul(&dy, self.val(*b).values(), m, n, k);
                    let db = kernels::matmul_tn(&dy, self.val(*a).values(), m, n, k);
                    accum(&mut grads, *a, &da, self.val(*a).len());
                    accum(&mut grads, *b, &db, self.val(*b).len());
                }
                Op::Add(a, b) => {
                    accum(&mut grads, *a, &dy, self.val(*a).len());
                    accum(&mut grads, *b, &dy, self.val(*b).len());
                }
                Op::Mul(a, b) => {
                    let da: Vec<S> = dy
                        .iter()
                        .zip(self.val(*b).values())
                        .map(|(&d, &v)| d * v)
                        .collect();
                    let db: Vec<S> = dy
                        .iter()
                        .zip(self.val(*a).values())
                        .map(|(&d, &v)| d * v)
                        .collect();
                    accum(&mut grads, *a, &da, self.val(*a).len());
                    accum(&mut grads, *b, &db, self.val(*b).len());
                }
                Op::Tanh(x) => {
                    let dx: Vec<S> = dy
                        .iter()
                        .zip(node.value.values())
                        .map(|(&d, &y)| d * (S::one() - y * y))
                        .collect();
                    accum(&mut grads, *x, &dx, self.val(*x).len());
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<S> = dy
                        .iter()
                        .zip(node.value.values())
                        .map(|(&d, &y)| d * y * (S::one() - y))
                        .collect();
                    accum(&mut grads, *x, &dx, self.val(*x).len());
                }
                Op::Softmax(x) => {
                    let (rows, cols) = (node.value.rows(), node.value.cols());
                    let y = node.value.values();
                    let mut dx = vec![S::zero(); rows * cols];
                    for r in 0..rows {
                        let off = r * cols;
                        let dot: S = (0..cols).map(|c| dy[off + c] * y[off + c]).sum();
                        for c in 0..cols {
                            dx[off + c] = y[off + c] * (dy[off + c] - dot);
                        }
                    }
                    accum(&mut grads, *x, &dx, self.val(*x).len());
                }
                Op::SelectRow(src, row) => {
                    let cols = self.val(*src).cols();
                    let g = grads[*src].get_or_insert_with(|| vec![S::zero(); self.val(*src).len()]);
                    for c in 0..cols {
                        g[row * cols + c] += dy[c];
                    }
                }
                Op::SliceCols(src, from, _to) => {
                    let (rows, width) = (node.value.rows(), node.value.cols());
                    let src_cols = self.val(*src).cols();
                    let g = grads[*src].get_or_insert_with(|| vec![S::zero(); self.val(*src).len()]);
                    for r in 0..rows {
                        for c in 0..width {
                            g[r * src_cols + from + c] += dy[r * width + c];
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let rows = node.value.rows();
                    let (ca, cb) = (self.val(*a).cols(), self.val(*b).cols());
                    let mut da = vec![S::zero(); rows * ca];
                    let mut db = vec![S::zero(); rows * cb];
                    for r in 0..rows {
                        let off = r * (ca + cb);
                        da[r * ca..(r + 1) * ca].copy_from_slice(&dy[off..off + ca]);
                        db[r * cb..(r + 1) * cb].copy_from_slice(&dy[off + ca..off + ca + cb]);
                    }
                    accum(&mut grads, *a, &da, self.val(*a).len());
                    accum(&mut grads, *b, &db, self.val(*b).len());
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.val(p).len();
                        accum(&mut grads, p, &dy[off..off + len], len);
                        off += len;
                    }
                }
                Op::Sum(x) => {
                    let d = dy[0];
                    let dx = vec![d; self.val(*x).len()];
                    accum(&mut grads, *x, &dx, self.val(*x).len());
                }
                Op::Scale(x, c) => {
                    let dx: Vec<S> = dy.iter().map(|&d| d * *c).collect();
                    accum(&mut grads, *x, &dx, self.val(*x).len());
                }
                Op::SoftmaxXent { logits, target } => {
                    let d = dy[0];
                    let p = kernels::softmax_row(self.val(*logits).values());
                    let dl: Vec<S> = p
                        .iter()
                        .zip(target)
                        .map(|(&pi, &ti)| d * (pi - ti))
                        .collect();
                    accum(&mut grads, *logits, &dl, self.val(*logits).len());
                }
            }
        }
        Ok(())
    }
}

fn accum<S: Scalar>(grads: &mut [Option<Vec<S>>], id: NodeId, contrib: &[S], len: usize) {
    let g = grads[id].get_or_insert_with(|| vec![S::zero(); len]);
    debug_assert_eq!(g.len(), contrib.len());
    for (gi, &ci) in g.iter_mut().zip(contrib) {
        *gi += ci;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite difference of `f` w.r.t. entry `i` of parameter `pid`.
    fn fd<F: Fn(&ParamStore<f64>) -> f64>(
        store: &mut ParamStore<f64>,
        f: &F,
        pid: ParamId,
        i: usize,
        h: f64,
    ) -> f64 {
        let orig = store.tensor(pid).values()[i];
        store.tensor_mut(pid).values_mut()[i] = orig + h;
        let plus = f(store);
        store.tensor_mut(pid).values_mut()[i] = orig - h;
        let minus = f(store);
        store.tensor_mut(pid).values_mut()[i] = orig;
        (plus - minus) / (2.0 * h)
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0) <= 1e-4
    }

    #[test]
    fn matmul_chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::<f64>::new();
        let w = store.add_uniform("w", vec![3, 4], 0.5, &mut rng);
        let b = store.add_uniform("b", vec![1, 4], 0.5, &mut rng);
        let x_vals: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let run = |store: &ParamStore<f64>| -> f64 {
            let mut g = Graph::new();
            let x = g.constant(Tensor::row(x_vals.clone()));
            let wn = g.param(store, w);
            let bn = g.param(store, b);
            let h = g.matmul(x, wn).unwrap();
            let h = g.add(h, bn).unwrap();
            let h = g.tanh(h);
            let s = g.sum(h);
            g.item(s)
        };

        store.zero_grads();
        {
            let mut g = Graph::new();
            let x = g.constant(Tensor::row(x_vals.clone()));
            let wn = g.param(&store, w);
            let bn = g.param(&store, b);
            let h = g.matmul(x, wn).unwrap();
            let h = g.add(h, bn).unwrap();
            let h = g.tanh(h);
            let s = g.sum(h);
            g.backward(s, &mut store).unwrap();
        }
        for pid in [w, b] {
            for i in 0..store.tensor(pid).len() {
                let numeric = fd(&mut store, &run, pid, i, 1e-4);
                let analytic = store.tensor(pid).grad().unwrap()[i];
                assert!(
                    rel_close(numeric, analytic),
                    "pid {pid} i {i}: {numeric} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn attention_shaped_graph_matches_finite_differences() {
        // softmax over scores from matmul_nt, context via matmul, concat,
        // slice, select_row, sigmoid, mul, scale: the remaining op set.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::<f64>::new();
        let enc = store.add_uniform("enc", vec![4, 3], 0.8, &mut rng);
        let q = store.add_uniform("q", vec![1, 3], 0.8, &mut rng);

        let run = |store: &ParamStore<f64>| -> f64 {
            let mut g = Graph::new();
            let e = g.param(store, enc);
            let qn = g.param(store, q);
            let scores = g.matmul_nt(qn, e).unwrap();
            let attn = g.softmax(scores);
            let ctx = g.matmul(attn, e).unwrap();
            let cat = g.concat_cols(qn, ctx).unwrap();
            let part = g.slice_cols(cat, 1, 5).unwrap();
            let row = g.select_row(e, 2).unwrap();
            let row = g.slice_cols(row, 0, 3).unwrap();
            let sg = g.sigmoid(row);
            let stacked = g.concat_rows(vec![sg, qn]).unwrap();
            let summed = g.sum(stacked);
            let p = g.sum(part);
            let prod = g.mul(summed, p).unwrap();
            let out = g.scale(prod, 0.7);
            g.item(out)
        };

        store.zero_grads();
        {
            let mut g = Graph::new();
            let e = g.param(&store, enc);
            let qn = g.param(&store, q);
            let scores = g.matmul_nt(qn, e).unwrap();
            let attn = g.softmax(scores);
            let ctx = g.matmul(attn, e).unwrap();
            let cat = g.concat_cols(qn, ctx).unwrap();
            let part = g.slice_cols(cat, 1, 5).unwrap();
            let row = g.select_row(e, 2).unwrap();
            let row = g.slice_cols(row, 0, 3).unwrap();
            let sg = g.sigmoid(row);
            let stacked = g.concat_rows(vec![sg, qn]).unwrap();
            let summed = g.sum(stacked);
            let p = g.sum(part);
            let prod = g.mul(summed, p).unwrap();
            let out = g.scale(prod, 0.7);
            g.backward(out, &mut store).unwrap();
        }
        for pid in [enc, q] {
            for i in 0..store.tensor(pid).len() {
                let numeric = fd(&mut store, &run, pid, i, 1e-4);
                let analytic = store.tensor(pid).grad().unwrap()[i];
                assert!(
                    rel_close(numeric, analytic),
                    "pid {pid} i {i}: {numeric} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn softmax_xent_value_and_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("logits", Tensor::row(vec![0.2, -1.0, 0.5]));
        let target = vec![0.0, 1.0, 0.0];

        let run = |store: &ParamStore<f64>| -> f64 {
            let mut g = Graph::new();
            let l = g.param(store, w);
            let loss = g.softmax_xent(l, target.clone()).unwrap();
            g.item(loss)
        };

        store.zero_grads();
        let mut g = Graph::new();
        let l = g.param(&store, w);
        let loss = g.softmax_xent(l, target.clone()).unwrap();
        let val = g.item(loss);
        // Manual cross entropy against the one-hot class.
        let logp = kernels::log_softmax_row(store.tensor(w).values());
        assert!((val + logp[1]).abs() < 1e-12);
        g.backward(loss, &mut store).unwrap();
        // Exact gradient is softmax − target.
        let p = kernels::softmax_row(store.tensor(w).values());
        let grad = store.tensor(w).grad().unwrap().to_vec();
        for i in 0..3 {
            assert!((grad[i] - (p[i] - target[i])).abs() < 1e-12);
            let numeric = fd(&mut store, &run, w, i, 1e-4);
            assert!(rel_close(numeric, grad[i]));
        }
    }

    #[test]
    fn softmax_xent_rejects_unnormalized_target() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::row(vec![0.0, 0.0]));
        assert!(matches!(
            g.softmax_xent(l, vec![0.5, 0.6]),
            Err(AutodiffError::Contract(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_an_error_not_a_panic() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::row(vec![1.0, 2.0]));
        let b = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            g.add(a, b),
            Err(AutodiffError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            g.matmul(a, b),
            Err(AutodiffError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn repeated_backward_accumulates_param_grads_deterministically() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::row(vec![0.3, -0.4]));
        let mut g = Graph::new();
        let wn = g.param(&store, w);
        let t = g.tanh(wn);
        let s = g.sum(t);
        store.zero_grads();
        g.backward(s, &mut store).unwrap();
        let once = store.tensor(w).grad().unwrap().to_vec();
        g.backward(s, &mut store).unwrap();
        let twice = store.tensor(w).grad().unwrap().to_vec();
        for i in 0..2 {
            assert_eq!(twice[i], 2.0 * once[i]);
        }
    }

    #[test]
    fn unreferenced_param_gets_no_gradient() {
        let mut store = ParamStore::<f64>::new();
        let used = store.add("used", Tensor::scalar(0.5));
        let unused = store.add("unused", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let x = g.param(&store, used);
        let t = g.tanh(x);
        let s = g.sum(t);
        store.zero_grads();
        g.backward(s, &mut store).unwrap();
        assert!(store.tensor(used).grad().is_some());
        let unused_grad = store.tensor(unused).grad();
        assert!(unused_grad.is_none() || unused_grad.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(
            g.backward(x, &mut store),
            Err(AutodiffError::Contract(_))
        ));
    }

    #[test]
    fn shared_subexpression_gets_summed_gradient() {
        // y = x·x (as mul) so dy/dx = 2x through two paths.
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let x = g.param(&store, w);
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y);
        store.zero_grads();
        g.backward(s, &mut store).unwrap();
        assert!((store.tensor(w).grad().unwrap()[0] - 6.0).abs() < 1e-12);
    }
}
