//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node. Parameters are borrowed from
//! a [`ParamStore`] without copying; [`Graph::backward`] walks the node list in
//! reverse and produces gradients for every node, from which parameter
//! gradients are collected.

use std::borrow::Cow;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    RowScale(Var, Vec<f64>),
    Softmax(Var),
    CausalSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Square(Var),
    MeanAll(Var),
    SumAll(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node<'p>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::with_capacity(512),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    fn mat(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[v.0].value.rows_cols(op)
    }

    /// Constant leaf; gradients are still reported for it when `requires_grad`.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Input,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.store.expect("graph created without a parameter store");
        let p = store.get(id);
        self.nodes.push(Node {
            value: Cow::Borrowed(&p.value),
            op: Op::Param(id),
            requires_grad: p.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat(a, "matmul")?;
        let (k2, n) = self.mat(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.dims(a), self.dims(b)));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nn(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat(a, "matmul_nt")?;
        let (n, k2) = self.mat(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", self.dims(a), self.dims(b)));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMulNT(a, b), &[a, b]))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::dim(name, self.dims(a), self.dims(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(self.dims(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-`n` row vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.mat(a, "add_row")?;
        if self.value(row).len() != n {
            return Err(Error::dim("add_row", self.dims(a), self.dims(row)));
        }
        let mut data = self.value(a).data().to_vec();
        let r = self.value(row).data();
        for i in 0..m {
            for (x, y) in data[i * n..(i + 1) * n].iter_mut().zip(r) {
                *x += y;
            }
        }
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(v.dims(), data).expect("same shape");
        self.push(t, Op::Scale(a, c), &[a])
    }

    /// Multiplies row `i` by the constant `coeffs[i]`.
    pub fn row_scale(&mut self, a: Var, coeffs: Vec<f64>) -> Result<Var> {
        let (m, n) = self.mat(a, "row_scale")?;
        if coeffs.len() != m {
            return Err(Error::dim("row_scale", self.dims(a), &[coeffs.len()]));
        }
        let mut data = self.value(a).data().to_vec();
        for (i, c) in coeffs.iter().enumerate() {
            for x in &mut data[i * n..(i + 1) * n] {
                *x *= c;
            }
        }
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::RowScale(a, coeffs), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).softmax_rows()?;
        Ok(self.push(t, Op::Softmax(a), &[a]))
    }

    /// Row-wise softmax where row `i` only sees columns `0..=i`.
    pub fn causal_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.mat(a, "causal_softmax_rows")?;
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            let row = &mut data[i * n..(i + 1) * n];
            let visible = (i + 1).min(n);
            kernels::softmax_in_place(&mut row[..visible]);
            row[visible..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::CausalSoftmax(a), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.mat(x, "layer_norm")?;
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::dim("layer_norm", self.dims(x), self.dims(gain)));
        }
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = v
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
            .collect();
        let t = Tensor::new(v.dims(), data).expect("same shape");
        self.push(t, Op::Gelu(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * x).collect();
        let t = Tensor::new(v.dims(), data).expect("same shape");
        self.push(t, Op::Square(a), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::MeanAll(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(a, "slice_rows")?;
        if start + len > m {
            return Err(Error::dim("slice_rows", self.dims(a), &[start, len]));
        }
        let data = self.value(a).data()[start * n..(start + len) * n].to_vec();
        Ok(self.push(Tensor::new(&[len, n], data)?, Op::SliceRows(a, start), &[a]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(a, "slice_cols")?;
        if start + len > n {
            return Err(Error::dim("slice_cols", self.dims(a), &[start, len]));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        Ok(self.push(Tensor::new(&[m, len], data)?, Op::SliceCols(a, start), &[a]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let (_, n) = self.mat(parts[0], "concat_rows")?;
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (pm, pn) = self.mat(p, "concat_rows")?;
            if pn != n {
                return Err(Error::dim("concat_rows", self.dims(parts[0]), self.dims(p)));
            }
            data.extend_from_slice(self.value(p).data());
            m += pm;
        }
        Ok(self.push(
            Tensor::new(&[m, n], data)?,
            Op::ConcatRows(parts.to_vec()),
            parts,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let (m, _) = self.mat(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.mat(p, "concat_cols")?;
            if pm != m {
                return Err(Error::dim("concat_cols", self.dims(parts[0]), self.dims(p)));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor::new(&[m, n], data)?,
            Op::ConcatCols(parts.to_vec()),
            parts,
        ))
    }

    /// Selects rows of a `[rows, n]` table; repeated indices accumulate on backward.
    pub fn gather_rows(&mut self, table: Var, idx: Vec<usize>) -> Result<Var> {
        let (rows, n) = self.mat(table, "gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Argument(format!(
                "row index {bad} out of range for table with {rows} rows"
            )));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in &idx {
            data.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let t = Tensor::new(&[idx.len(), n], data)?;
        Ok(self.push(t, Op::GatherRows(table, idx), &[table]))
    }

    /// Values of every softmax node recorded so far (attention weights).
    pub fn softmax_outputs(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Softmax(_) | Op::CausalSoftmax(_)))
            .map(|n| n.value.as_ref())
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<NodeGrads> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim("backward", self.dims(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(NodeGrads { grads })
    }

    fn propagate(&self, node: &Node<'_>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(buf);
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.shape().matrix().unwrap();
                let (_, n) = self.nodes[b.0].value.shape().matrix().unwrap();
                if wants(*a) {
                    acc(*a, &mut |buf| kernels::matmul_nt(g, val(*b), buf, m, n, k));
                }
                if wants(*b) {
                    acc(*b, &mut |buf| kernels::matmul_tn(val(*a), g, buf, k, m, n));
                }
            }
            Op::MatMulNT(a, b) => {
                // c = a bᵀ, a: [m,k], b: [n,k]
                let (m, k) = self.nodes[a.0].value.shape().matrix().unwrap();
                let (n, _) = self.nodes[b.0].value.shape().matrix().unwrap();
                if wants(*a) {
                    acc(*a, &mut |buf| kernels::matmul_nn(g, val(*b), buf, m, n, k));
                }
                if wants(*b) {
                    acc(*b, &mut |buf| kernels::matmul_tn(g, val(*a), buf, n, m, k));
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x -= y)
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * av[i];
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*row, &mut |buf| {
                    let n = buf.len();
                    for chunk in g.chunks(n) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)
                });
            }
            Op::RowScale(a, coeffs) => {
                let n = g.len() / coeffs.len();
                acc(*a, &mut |buf| {
                    for (i, c) in coeffs.iter().enumerate() {
                        for j in i * n..(i + 1) * n {
                            buf[j] += c * g[j];
                        }
                    }
                });
            }
            Op::Softmax(a) | Op::CausalSoftmax(a) => {
                let y = node.value.data();
                let (_, n) = node.value.shape().matrix().unwrap();
                acc(*a, &mut |buf| {
                    for (row, (ys, gs)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                        let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            buf[row * n + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = val(*gain);
                let n = gv.len();
                acc(*x, &mut |buf| {
                    for (i, inv) in inv_std.iter().enumerate() {
                        let gs = &g[i * n..(i + 1) * n];
                        let hs = &xhat[i * n..(i + 1) * n];
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for j in 0..n {
                            let d = gs[j] * gv[j];
                            sum_d += d;
                            sum_dh += d * hs[j];
                        }
                        for j in 0..n {
                            let d = gs[j] * gv[j];
                            buf[i * n + j] +=
                                inv / n as f64 * (n as f64 * d - sum_d - hs[j] * sum_dh);
                        }
                    }
                });
                acc(*gain, &mut |buf| {
                    for (gs, hs) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            buf[j] += gs[j] * hs[j];
                        }
                    }
                });
                acc(*bias, &mut |buf| {
                    for gs in g.chunks(n) {
                        add_into(buf, gs);
                    }
                });
            }
            Op::Gelu(a) => {
                let xs = val(*a);
                acc(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        let x = xs[i];
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                        buf[i] += g[i] * d;
                    }
                });
            }
            Op::Square(a) => {
                let xs = val(*a);
                acc(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += 2.0 * xs[i] * g[i];
                    }
                });
            }
            Op::MeanAll(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                acc(*a, &mut |buf| buf.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SumAll(a) => {
                acc(*a, &mut |buf| buf.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::SliceRows(a, start) => {
                let (_, n) = node.value.shape().matrix().unwrap();
                acc(*a, &mut |buf| {
                    add_into(&mut buf[start * n..start * n + g.len()], g)
                });
            }
            Op::SliceCols(a, start) => {
                let (m, len) = node.value.shape().matrix().unwrap();
                let (_, n) = self.nodes[a.0].value.shape().matrix().unwrap();
                acc(*a, &mut |buf| {
                    for i in 0..m {
                        add_into(
                            &mut buf[i * n + start..i * n + start + len],
                            &g[i * len..(i + 1) * len],
                        );
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(p, &mut |buf| add_into(buf, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.shape().matrix().unwrap();
                let mut col = 0;
                for &p in parts {
                    let (_, w) = self.nodes[p.0].value.shape().matrix().unwrap();
                    acc(p, &mut |buf| {
                        for i in 0..m {
                            add_into(
                                &mut buf[i * w..(i + 1) * w],
                                &g[i * n + col..i * n + col + w],
                            );
                        }
                    });
                    col += w;
                }
            }
            Op::GatherRows(table, idx) => {
                let n = g.len() / idx.len().max(1);
                acc(*table, &mut |buf| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut buf[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Output of [`Graph::backward`].
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl NodeGrads {
    /// Gradient of the loss with respect to `v`, shaped like its value.
    /// `None` when `v` does not influence the loss or does not require grad.
    pub fn wrt(&self, graph: &Graph<'_>, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(graph.value(v).dims(), g.clone()).ok()
    }

    /// Adds every parameter node's gradient into `out`.
    pub fn accumulate_params(&self, graph: &Graph<'_>, out: &mut Gradients) {
        for (node, g) in graph.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                add_into(out.get_mut(*id), g);
            }
        }
    }
}
