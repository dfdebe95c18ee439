//! Reverse-mode gradient tape over vector-valued operations.
//!
//! The tape is an append-only arena: recording an operation evaluates it
//! immediately (through the same kernels as the untaped code paths, so taped
//! forward values are bit-identical to untaped evaluation) and stores the
//! operands' node ids. `backward` replays the arena in reverse, accumulating
//! adjoints by the chain rule.
//!
//! Leaves can borrow their value buffers, so registering large parameter
//! matrices does not copy them. A tape is single-owner while tracing;
//! parameter buffers themselves are only read.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat;
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `w` is a `rows x cols` matrix node (flat row-major), `v` a vector node.
    MatVec {
        w: NodeId,
        v: NodeId,
        rows: usize,
        cols: usize,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `scale * x + shift`, elementwise; only `scale` matters in reverse.
    Affine {
        x: NodeId,
        scale: f64,
    },
    Concat(NodeId, NodeId),
    /// Soft threshold of `v` at scalar node `lam`.
    SoftThreshold {
        v: NodeId,
        lam: NodeId,
    },
    /// `max(x, floor)` elementwise; subgradient 0 at the kink.
    ClampMin {
        x: NodeId,
        floor: f64,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// `ln(max(x, LN_FLOOR))` elementwise.
    LnFloored(NodeId),
    Exp(NodeId),
    Dot(NodeId, NodeId),
    /// `sum_i (a_i - b_i)^2`, a scalar.
    SqDist(NodeId, NodeId),
    /// Gathers scalar nodes into one vector node.
    Stack(Vec<NodeId>),
    LogSumExp(NodeId),
    /// `x_i - s` with `s` a scalar node.
    SubScalar {
        x: NodeId,
        s: NodeId,
    },
    /// Extracts element `i` of vector node `v` as a scalar.
    Index {
        v: NodeId,
        i: usize,
    },
}

/// Append-only reverse-mode tape.
pub struct Tape<'a> {
    ops: Vec<Op>,
    values: Vec<Cow<'a, [f64]>>,
    adjoints: Vec<Vec<f64>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            values: Vec::new(),
            adjoints: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            ops: Vec::with_capacity(nodes),
            values: Vec::with_capacity(nodes),
            adjoints: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Cow<'a, [f64]>) -> NodeId {
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        id
    }

    /// Registers a borrowed leaf (parameter or constant input). No copy.
    pub fn leaf(&mut self, value: &'a [f64]) -> NodeId {
        self.push(Op::Leaf, Cow::Borrowed(value))
    }

    /// Registers a leaf that owns its value buffer.
    pub fn leaf_owned(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Leaf, Cow::Owned(value))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf_owned(vec![value])
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[id.0]
    }

    /// Value of a length-1 node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar_value on node of length {}", v.len());
        v[0]
    }

    pub fn matvec(&mut self, w: NodeId, v: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(
            self.values[w.0].len(),
            rows * cols,
            "matvec: matrix node has length {}, expected {rows}x{cols}",
            self.values[w.0].len()
        );
        let mut out = vec![0.0; rows];
        mat::matvec_into(&self.values[w.0], rows, cols, &self.values[v.0], &mut out);
        self.push(Op::MatVec { w, v, rows, cols }, Cow::Owned(out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(va.len(), vb.len(), "add: length mismatch");
        let out: Vec<f64> = va.iter().zip(vb.iter()).map(|(x, y)| x + y).collect();
        self.push(Op::Add(a, b), Cow::Owned(out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(va.len(), vb.len(), "mul: length mismatch");
        let out: Vec<f64> = va.iter().zip(vb.iter()).map(|(x, y)| x * y).collect();
        self.push(Op::Mul(a, b), Cow::Owned(out))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|v| scale * v + shift).collect();
        self.push(Op::Affine { x, scale }, Cow::Owned(out))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = Vec::with_capacity(self.values[a.0].len() + self.values[b.0].len());
        out.extend_from_slice(&self.values[a.0]);
        out.extend_from_slice(&self.values[b.0]);
        self.push(Op::Concat(a, b), Cow::Owned(out))
    }

    /// Soft threshold; `lam` must be a nonnegative scalar node.
    pub fn soft_threshold(&mut self, v: NodeId, lam: NodeId) -> NodeId {
        let l = self.scalar_value(lam);
        let mut out = vec![0.0; self.values[v.0].len()];
        mat::soft_threshold_into(&self.values[v.0], l, &mut out);
        self.push(Op::SoftThreshold { v, lam }, Cow::Owned(out))
    }

    pub fn clamp_min(&mut self, x: NodeId, floor: f64) -> NodeId {
        let out: Vec<f64> = self.values[x.0]
            .iter()
            .map(|&v| if v > floor { v } else { floor })
            .collect();
        self.push(Op::ClampMin { x, floor }, Cow::Owned(out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|&v| math::sigmoid(v)).collect();
        self.push(Op::Sigmoid(x), Cow::Owned(out))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|&v| math::tanh(v)).collect();
        self.push(Op::Tanh(x), Cow::Owned(out))
    }

    pub fn ln_floored(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|&v| math::ln_floored(v)).collect();
        self.push(Op::LnFloored(x), Cow::Owned(out))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.values[x.0].iter().map(|&v| math::exp(v)).collect();
        self.push(Op::Exp(x), Cow::Owned(out))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = mat::dot(&self.values[a.0], &self.values[b.0]);
        self.push(Op::Dot(a, b), Cow::Owned(vec![out]))
    }

    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = mat::sq_dist(&self.values[a.0], &self.values[b.0]);
        self.push(Op::SqDist(a, b), Cow::Owned(vec![out]))
    }

    pub fn stack(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::with_capacity(parts.len());
        for &p in parts {
            assert_eq!(
                self.values[p.0].len(),
                1,
                "stack expects scalar nodes, got length {}",
                self.values[p.0].len()
            );
            out.push(self.values[p.0][0]);
        }
        self.push(Op::Stack(parts.to_vec()), Cow::Owned(out))
    }

    pub fn logsumexp(&mut self, x: NodeId) -> NodeId {
        let out = math::logsumexp(&self.values[x.0]);
        self.push(Op::LogSumExp(x), Cow::Owned(vec![out]))
    }

    pub fn sub_scalar(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let sv = self.scalar_value(s);
        let out: Vec<f64> = self.values[x.0].iter().map(|v| v - sv).collect();
        self.push(Op::SubScalar { x, s }, Cow::Owned(out))
    }

    pub fn index(&mut self, v: NodeId, i: usize) -> NodeId {
        let out = self.values[v.0][i];
        self.push(Op::Index { v, i }, Cow::Owned(vec![out]))
    }

    /// Runs the reverse pass from a scalar loss node.
    ///
    /// Resets all adjoints first, so repeated calls are independent; the
    /// adjoint of any node not on a path to the loss stays exactly zero.
    /// Panics if the loss node is not scalar-valued.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(
            self.values[loss.0].len(),
            1,
            "backward: loss node has length {}, expected scalar",
            self.values[loss.0].len()
        );
        self.adjoints.clear();
        self.adjoints
            .extend(self.values.iter().map(|v| vec![0.0; v.len()]));
        self.adjoints[loss.0][0] = 1.0;

        for id in (0..self.ops.len()).rev() {
            if self.adjoints[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatVec { w, v, rows, cols } => {
                    let (w, v, rows, cols) = (*w, *v, *rows, *cols);
                    // adj_w += outer(g, v); adj_v += W^T g
                    let g = core::mem::take(&mut self.adjoints[id]);
                    let vval = &self.values[v.0];
                    {
                        let adj_w = &mut self.adjoints[w.0];
                        for r in 0..rows {
                            mat::axpy(&mut adj_w[r * cols..(r + 1) * cols], g[r], vval);
                        }
                    }
                    let wval = &self.values[w.0];
                    {
                        let adj_v = &mut self.adjoints[v.0];
                        for r in 0..rows {
                            mat::axpy(adj_v, g[r], &wval[r * cols..(r + 1) * cols]);
                        }
                    }
                    self.adjoints[id] = g;
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    mat::axpy(&mut self.adjoints[a.0], 1.0, &g);
                    mat::axpy(&mut self.adjoints[b.0], 1.0, &g);
                    self.adjoints[id] = g;
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        self.adjoints[a.0][i] += g[i] * self.values[b.0][i];
                        self.adjoints[b.0][i] += g[i] * self.values[a.0][i];
                    }
                    self.adjoints[id] = g;
                }
                Op::Affine { x, scale } => {
                    let (x, scale) = (*x, *scale);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    mat::axpy(&mut self.adjoints[x.0], scale, &g);
                    self.adjoints[id] = g;
                }
                Op::Concat(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    let na = self.values[a.0].len();
                    mat::axpy(&mut self.adjoints[a.0], 1.0, &g[..na]);
                    mat::axpy(&mut self.adjoints[b.0], 1.0, &g[na..]);
                    self.adjoints[id] = g;
                }
                Op::SoftThreshold { v, lam } => {
                    let (v, lam) = (*v, *lam);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    let l = self.values[lam.0][0];
                    let mut glam = 0.0;
                    for i in 0..g.len() {
                        let x = self.values[v.0][i];
                        if math::abs(x) > l {
                            self.adjoints[v.0][i] += g[i];
                            glam -= g[i] * math::sign(x);
                        }
                    }
                    self.adjoints[lam.0][0] += glam;
                    self.adjoints[id] = g;
                }
                Op::ClampMin { x, floor } => {
                    let (x, floor) = (*x, *floor);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        if self.values[x.0][i] > floor {
                            self.adjoints[x.0][i] += g[i];
                        }
                    }
                    self.adjoints[id] = g;
                }
                Op::Sigmoid(x) => {
                    let x = *x;
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        let y = self.values[id][i];
                        self.adjoints[x.0][i] += g[i] * y * (1.0 - y);
                    }
                    self.adjoints[id] = g;
                }
                Op::Tanh(x) => {
                    let x = *x;
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        let y = self.values[id][i];
                        self.adjoints[x.0][i] += g[i] * (1.0 - y * y);
                    }
                    self.adjoints[id] = g;
                }
                Op::LnFloored(x) => {
                    let x = *x;
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        let v = self.values[x.0][i];
                        if v > math::LN_FLOOR {
                            self.adjoints[x.0][i] += g[i] / v;
                        }
                    }
                    self.adjoints[id] = g;
                }
                Op::Exp(x) => {
                    let x = *x;
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for i in 0..g.len() {
                        self.adjoints[x.0][i] += g[i] * self.values[id][i];
                    }
                    self.adjoints[id] = g;
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = self.adjoints[id][0];
                    mat::axpy(&mut self.adjoints[a.0], g, &self.values[b.0]);
                    mat::axpy(&mut self.adjoints[b.0], g, &self.values[a.0]);
                }
                Op::SqDist(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = self.adjoints[id][0];
                    for i in 0..self.values[a.0].len() {
                        let d = self.values[a.0][i] - self.values[b.0][i];
                        self.adjoints[a.0][i] += 2.0 * g * d;
                        self.adjoints[b.0][i] -= 2.0 * g * d;
                    }
                }
                Op::Stack(parts) => {
                    let parts = parts.clone();
                    let g = core::mem::take(&mut self.adjoints[id]);
                    for (k, p) in parts.iter().enumerate() {
                        self.adjoints[p.0][0] += g[k];
                    }
                    self.adjoints[id] = g;
                }
                Op::LogSumExp(x) => {
                    let x = *x;
                    let g = self.adjoints[id][0];
                    let out = self.values[id][0];
                    for i in 0..self.values[x.0].len() {
                        self.adjoints[x.0][i] += g * math::exp(self.values[x.0][i] - out);
                    }
                }
                Op::SubScalar { x, s } => {
                    let (x, s) = (*x, *s);
                    let g = core::mem::take(&mut self.adjoints[id]);
                    let mut sum = 0.0;
                    for (i, &gi) in g.iter().enumerate() {
                        self.adjoints[x.0][i] += gi;
                        sum += gi;
                    }
                    self.adjoints[s.0][0] -= sum;
                    self.adjoints[id] = g;
                }
                Op::Index { v, i } => {
                    let (v, i) = (*v, *i);
                    let g = self.adjoints[id][0];
                    self.adjoints[v.0][i] += g;
                }
            }
        }
    }

    /// Adjoint buffer of a node after `backward`.
    pub fn adjoint(&self, id: NodeId) -> &[f64] {
        &self.adjoints[id.0]
    }
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        // loss = w * x with w = 2, x = 3 -> dloss/dw = 3
        let mut t = Tape::new();
        let w = t.scalar(2.0);
        let x = t.scalar(3.0);
        let loss = t.mul(w, x);
        t.backward(loss);
        assert_eq!(t.adjoint(w), &[3.0]);
        assert_eq!(t.adjoint(x), &[2.0]);
    }

    #[test]
    fn soft_threshold_chain_rule() {
        // loss = soft_threshold(x, lam)^2 at x = 1, lam = 0.25
        // d/dx = 2 * 0.75 * 1 = 1.5
        let mut t = Tape::new();
        let x = t.scalar(1.0);
        let lam = t.scalar(0.25);
        let y = t.soft_threshold(x, lam);
        let loss = t.mul(y, y);
        t.backward(loss);
        assert!((t.adjoint(x)[0] - 1.5).abs() < 1e-15);
        // d/dlam = 2 * 0.75 * (-1)
        assert!((t.adjoint(lam)[0] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn taped_matvec_values_bit_identical_to_kernel() {
        let w = [1.0, 2.5, -0.5, 4.0, 0.25, -3.0];
        let v = [0.7, -1.3];
        let mut t = Tape::new();
        let wn = t.leaf(&w);
        let vn = t.leaf(&v);
        let out = t.matvec(wn, vn, 3, 2);
        let mut plain = alloc::vec![0.0; 3];
        mat::matvec_into(&w, 3, 2, &v, &mut plain);
        assert_eq!(t.value(out), plain.as_slice());
    }

    #[test]
    fn unused_node_adjoint_is_zero() {
        let mut t = Tape::new();
        let a = t.scalar(1.5);
        let unused = t.scalar(9.0);
        let _unused_sq = t.mul(unused, unused);
        let loss = t.mul(a, a);
        t.backward(loss);
        assert_eq!(t.adjoint(unused), &[0.0]);
    }

    #[test]
    #[should_panic(expected = "expected scalar")]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let v = t.leaf_owned(alloc::vec![1.0, 2.0]);
        t.backward(v);
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut t = Tape::new();
        let x = t.scalar(0.8);
        let y = t.scalar(-1.2);
        let l1 = t.mul(x, y);
        let sx = t.sigmoid(x);
        let l2 = t.dot(sx, y);
        let total = t.add(l1, l2);

        t.backward(l1);
        let g1 = (t.adjoint(x)[0], t.adjoint(y)[0]);
        t.backward(l2);
        let g2 = (t.adjoint(x)[0], t.adjoint(y)[0]);
        t.backward(total);
        let g = (t.adjoint(x)[0], t.adjoint(y)[0]);
        assert!((g.0 - (g1.0 + g2.0)).abs() < 1e-12);
        assert!((g.1 - (g1.1 + g2.1)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_gradient_is_softmax() {
        let mut t = Tape::new();
        let x = t.leaf_owned(alloc::vec![0.1, 1.4, -2.0]);
        let l = t.logsumexp(x);
        t.backward(l);
        let g = t.adjoint(x);
        let z = math::logsumexp(&[0.1, 1.4, -2.0]);
        for (i, &xi) in [0.1, 1.4, -2.0].iter().enumerate() {
            assert!((g[i] - math::exp(xi - z)).abs() < 1e-12);
        }
        let total: f64 = g.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
