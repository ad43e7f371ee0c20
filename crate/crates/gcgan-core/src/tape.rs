//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every forward operation in topological order. Calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and returns
//! a [`Gradients`] map holding the accumulated gradient for every node,
//! leaves included. The tape is rebuilt for each forward pass; gradients are
//! allocated fresh on every backward call, so contributions from multiple
//! consumers of a node always sum additively within one pass.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::Matrix;

/// Elementwise nonlinearity applied by [`Tape::activation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Tanh => libm::tanh(x),
            ActivationKind::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
        }
    }

    /// Derivative at input `x`. The subgradient at exactly 0 is fixed to 0
    /// for ReLU and to `slope` for leaky ReLU.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationKind::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + libm::exp(-x));
                s * (1.0 - s)
            }
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Activation(NodeId, ActivationKind),
    /// Row-wise 1D convolution of `x` with kernel node `w` (1 x (2M+1)).
    Conv1dRows { x: NodeId, w: NodeId },
    /// Piecewise-linear row resampling from `k_in` to the node's own width.
    ResizeTemporal { x: NodeId },
    MeanAll(NodeId),
    /// Column-wise mean over rows: N x K -> 1 x K.
    MeanRows(NodeId),
    Log(NodeId),
    Add(NodeId, NodeId),
    /// Elementwise `scale * x + shift`; the shift is constant so only the
    /// scale matters for the backward pass.
    Affine { x: NodeId, scale: f64 },
    Clamp { x: NodeId, lo: f64, hi: f64 },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Per-node gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Matrix {
        &self.grads[id.0]
    }
}

/// Records one forward computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a constant or parameter. Gradients flow to leaves but stop there.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn activation(&mut self, x: NodeId, kind: ActivationKind) -> NodeId {
        let v = self.value(x).map(|e| kind.apply(e));
        self.push(v, Op::Activation(x, kind))
    }

    /// Row-wise 1D convolution with zero padding outside the signal.
    ///
    /// `w` must be a 1 x (2M+1) node; output column `j` is
    /// `sum_m x[:, j-m] * w[m]` for `m` in `[-M, M]`.
    pub fn conv1d_rows(&mut self, x: NodeId, w: NodeId) -> Result<NodeId, CoreError> {
        let (wr, wl) = self.value(w).shape();
        let k = self.value(x).cols();
        if wr != 1 || wl % 2 == 0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "conv kernel must be 1 x odd, got {wr}x{wl}"
            )));
        }
        if wl > 2 * k + 1 {
            return Err(CoreError::FilterTooLong {
                filter_len: wl,
                cols: k,
            });
        }
        let v = conv1d_forward(self.value(x), self.value(w));
        Ok(self.push(v, Op::Conv1dRows { x, w }))
    }

    /// Resample each row to `k_out` points by piecewise-linear interpolation
    /// with endpoints mapped to endpoints.
    pub fn resize_temporal(&mut self, x: NodeId, k_out: usize) -> Result<NodeId, CoreError> {
        if k_out == 0 {
            return Err(CoreError::EmptyMatrix);
        }
        let xv = self.value(x);
        let mut out = Matrix::zeros(xv.rows(), k_out);
        for i in 0..xv.rows() {
            for j in 0..k_out {
                let (j0, j1, f) = resample_weights(xv.cols(), k_out, j);
                let v = (1.0 - f) * xv.get(i, j0) + f * xv.get(i, j1);
                out.set(i, j, v);
            }
        }
        Ok(self.push(out, Op::ResizeTemporal { x }))
    }

    /// Mean of all entries, reduced to a 1x1 node.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let v = Matrix::filled(1, 1, self.value(x).mean());
        self.push(v, Op::MeanAll(x))
    }

    /// Column-wise mean over rows: N x K -> 1 x K.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let n = xv.rows() as f64;
        let mut out = Matrix::zeros(1, xv.cols());
        for j in 0..xv.cols() {
            let mut s = 0.0;
            for i in 0..xv.rows() {
                s += xv.get(i, j);
            }
            out.set(0, j, s / n);
        }
        self.push(out, Op::MeanRows(x))
    }

    /// Elementwise natural log; errors on non-positive entries.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId, CoreError> {
        let xv = self.value(x);
        if let Some(&bad) = xv.data().iter().find(|&&e| e <= 0.0) {
            return Err(CoreError::LogDomain { value: bad });
        }
        let v = xv.map(libm::log);
        Ok(self.push(v, Op::Log(x)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(x).map(|e| scale * e + shift);
        self.push(v, Op::Affine { x, scale })
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(x).map(|e| e.clamp(lo, hi));
        self.push(v, Op::Clamp { x, lo, hi })
    }

    /// Reverse sweep from a scalar loss node. Returns the gradient of the
    /// loss with respect to every node on the tape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, CoreError> {
        let (lr, lc) = self.value(loss).shape();
        if (lr, lc) != (1, 1) {
            return Err(CoreError::NonScalarLoss { rows: lr, cols: lc });
        }
        let mut grads: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].set(0, 0, 1.0);

        for id in (0..=loss.0).rev() {
            // Split so the upstream gradient can be read while writing inputs.
            let (lower, upper) = grads.split_at_mut(id);
            let g = &upper[0];
            match self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = self.value(a);
                    let bv = self.value(b);
                    let ga = g.matmul(&bv.transpose())?;
                    let gb = av.transpose().matmul(g)?;
                    accumulate(&mut lower[a.0], &ga);
                    accumulate(&mut lower[b.0], &gb);
                }
                Op::Activation(x, kind) => {
                    let xv = self.value(x);
                    let gx = &mut lower[x.0];
                    for i in 0..xv.rows() {
                        for j in 0..xv.cols() {
                            gx.add_at(i, j, g.get(i, j) * kind.derivative(xv.get(i, j)));
                        }
                    }
                }
                Op::Conv1dRows { x, w } => {
                    let xv = self.value(x);
                    let wv = self.value(w);
                    let m_half = (wv.cols() - 1) / 2;
                    let k = xv.cols();
                    // Borrow both input grads disjointly.
                    let split = x.0.max(w.0);
                    let (head, tail) = lower.split_at_mut(split);
                    let (gx, gw) = if x.0 < w.0 {
                        (&mut head[x.0], &mut tail[0])
                    } else {
                        (&mut tail[0], &mut head[w.0])
                    };
                    for r in 0..xv.rows() {
                        for j in 0..k {
                            let gj = g.get(r, j);
                            if gj == 0.0 {
                                continue;
                            }
                            for m in 0..wv.cols() {
                                let offset = m as isize - m_half as isize;
                                let src = j as isize - offset;
                                if src >= 0 && (src as usize) < k {
                                    gx.add_at(r, src as usize, gj * wv.get(0, m));
                                    gw.add_at(0, m, gj * xv.get(r, src as usize));
                                }
                            }
                        }
                    }
                }
                Op::ResizeTemporal { x } => {
                    let k_in = self.value(x).cols();
                    let k_out = self.nodes[id].value.cols();
                    let gx = &mut lower[x.0];
                    for i in 0..gx.rows() {
                        for j in 0..k_out {
                            let (j0, j1, f) = resample_weights(k_in, k_out, j);
                            let gj = g.get(i, j);
                            gx.add_at(i, j0, (1.0 - f) * gj);
                            if f != 0.0 {
                                gx.add_at(i, j1, f * gj);
                            }
                        }
                    }
                }
                Op::MeanAll(x) => {
                    let gx = &mut lower[x.0];
                    let scale = g.get(0, 0) / (gx.rows() * gx.cols()) as f64;
                    for e in gx.data_mut() {
                        *e += scale;
                    }
                }
                Op::MeanRows(x) => {
                    let gx = &mut lower[x.0];
                    let n = gx.rows() as f64;
                    for i in 0..gx.rows() {
                        for j in 0..gx.cols() {
                            gx.add_at(i, j, g.get(0, j) / n);
                        }
                    }
                }
                Op::Log(x) => {
                    let xv = self.value(x);
                    let gx = &mut lower[x.0];
                    for i in 0..xv.rows() {
                        for j in 0..xv.cols() {
                            gx.add_at(i, j, g.get(i, j) / xv.get(i, j));
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut lower[a.0], g);
                    accumulate(&mut lower[b.0], g);
                }
                Op::Affine { x, scale } => {
                    let gx = &mut lower[x.0];
                    for (d, &s) in gx.data_mut().iter_mut().zip(g.data()) {
                        *d += scale * s;
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.value(x);
                    let gx = &mut lower[x.0];
                    for i in 0..xv.rows() {
                        for j in 0..xv.cols() {
                            let e = xv.get(i, j);
                            if e > lo && e < hi {
                                gx.add_at(i, j, g.get(i, j));
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(dst: &mut Matrix, src: &Matrix) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn conv1d_forward(x: &Matrix, w: &Matrix) -> Matrix {
    let k = x.cols();
    let m_half = (w.cols() - 1) / 2;
    let mut out = Matrix::zeros(x.rows(), k);
    for r in 0..x.rows() {
        for j in 0..k {
            let mut acc = 0.0;
            for m in 0..w.cols() {
                let offset = m as isize - m_half as isize;
                let src = j as isize - offset;
                if src >= 0 && (src as usize) < k {
                    acc += x.get(r, src as usize) * w.get(0, m);
                }
            }
            out.set(r, j, acc);
        }
    }
    out
}

/// Interpolation stencil for resampling a row of width `k_in` to `k_out`.
/// Returns `(j0, j1, frac)` so the output is `(1-frac)*x[j0] + frac*x[j1]`.
fn resample_weights(k_in: usize, k_out: usize, j: usize) -> (usize, usize, f64) {
    if k_in == 1 {
        return (0, 0, 0.0);
    }
    if k_out == 1 {
        return (0, 0, 0.0);
    }
    let pos = j as f64 * (k_in - 1) as f64 / (k_out - 1) as f64;
    let j0 = pos as usize;
    if j0 >= k_in - 1 {
        return (k_in - 1, k_in - 1, 0.0);
    }
    (j0, j0 + 1, pos - j0 as f64)
}
