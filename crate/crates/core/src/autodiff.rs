//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Tape`] records every operation of one forward pass; parameters are
//! copied onto the tape from a [`ParamStore`] and their gradients are
//! accumulated back into the store by [`Tape::backward`]. Graph sparsity is
//! expressed with explicit row index lists (gather / scatter / grouped
//! softmax) rather than sparse formats.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use thiserror::Error;

pub type Shape = (usize, usize);

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {a:?} vs {b:?}")]
    Shape { op: &'static str, a: Shape, b: Shape },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalar(Shape),
    #[error("invalid argument to {op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Exp(Var),
    LayerNorm { x: Var, xhat: Array2<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Array2<f64> },
    GroupedSoftmax { x: Var, groups: Vec<usize>, n_groups: usize },
    GroupedLogSoftmax { x: Var, groups: Vec<usize>, n_groups: usize },
    Gather { x: Var, idx: Vec<usize> },
    ScatterAdd { x: Var, idx: Vec<usize> },
    ScatterMean { x: Var, idx: Vec<usize>, counts: Vec<f64> },
    HeadDot { x: Var, a: Var, heads: usize },
    HeadScale { w: Var, v: Var },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Huber(Var, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

fn shape(a: &Array2<f64>) -> Shape {
    a.dim()
}

fn check_same(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<(), DiffError> {
    if a.dim() != b.dim() {
        return Err(DiffError::Shape { op, a: a.dim(), b: b.dim() });
    }
    Ok(())
}

fn check_index(op: &'static str, idx: &[usize], rows: usize, bound: usize) -> Result<(), DiffError> {
    if idx.len() != rows {
        return Err(DiffError::Invalid { op, msg: format!("{} indices for {} rows", idx.len(), rows) });
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= bound) {
        return Err(DiffError::Invalid { op, msg: format!("index {bad} out of range {bound}") });
    }
    Ok(())
}

fn head_width(op: &'static str, cols: usize, heads: usize) -> Result<usize, DiffError> {
    if heads == 0 || cols % heads != 0 {
        return Err(DiffError::Invalid { op, msg: format!("{cols} columns do not split into {heads} heads") });
    }
    Ok(cols / heads)
}

/// Per-column softmax within row groups; also returns the log-probabilities.
fn grouped_softmax_values(x: &Array2<f64>, groups: &[usize], n_groups: usize) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = x.dim();
    let mut p = Array2::zeros((rows, cols));
    let mut logp = Array2::zeros((rows, cols));
    let mut max = vec![f64::NEG_INFINITY; n_groups];
    let mut sum = vec![0.0; n_groups];
    for c in 0..cols {
        max.iter_mut().for_each(|m| *m = f64::NEG_INFINITY);
        sum.iter_mut().for_each(|s| *s = 0.0);
        for r in 0..rows {
            let g = groups[r];
            max[g] = max[g].max(x[[r, c]]);
        }
        for r in 0..rows {
            let e = (x[[r, c]] - max[groups[r]]).exp();
            p[[r, c]] = e;
            sum[groups[r]] += e;
        }
        for r in 0..rows {
            let g = groups[r];
            p[[r, c]] /= sum[g];
            logp[[r, c]] = x[[r, c]] - max[g] - sum[g].ln();
        }
    }
    (p, logp)
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        shape(&self.nodes[v.0].value)
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.params[id.0].value.clone(), Op::Leaf);
        self.params.push((v, id));
        v
    }

    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, DiffError> {
        let (a, b) = (self.value(x), self.value(w));
        if a.ncols() != b.nrows() {
            return Err(DiffError::Shape { op: "matmul", a: shape(a), b: shape(b) });
        }
        let out = a.dot(b);
        Ok(self.push(out, Op::Matmul(x, w)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        check_same("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        check_same("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        check_same("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a `1 x D` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, DiffError> {
        let (a, r) = (self.value(x), self.value(row));
        if r.nrows() != 1 || r.ncols() != a.ncols() {
            return Err(DiffError::Shape { op: "add_row", a: shape(a), b: shape(r) });
        }
        let out = a + r;
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    /// Multiplies every row of `x` elementwise by a `1 x D` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var, DiffError> {
        let (a, r) = (self.value(x), self.value(row));
        if r.nrows() != 1 || r.ncols() != a.ncols() {
            return Err(DiffError::Shape { op: "mul_row", a: shape(a), b: shape(r) });
        }
        let out = a * r;
        Ok(self.push(out, Op::MulRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x) * k;
        self.push(out, Op::Scale(x, k))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).mapv(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::exp);
        self.push(out, Op::Exp(x))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let a = self.value(x);
        let (rows, cols) = a.dim();
        let mut xhat = Array2::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in a.axis_iter(Axis(0)).enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let k = 1.0 / (var + eps).sqrt();
            for c in 0..cols {
                xhat[[r, c]] = (row[c] - mean) * k;
            }
            inv_std.push(k);
        }
        self.push(xhat.clone(), Op::LayerNorm { x, xhat, inv_std })
    }

    /// Inverted dropout. Identity when not training or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var, DiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(DiffError::Invalid { op: "dropout", msg: format!("p = {p}") });
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = self.value(x).mapv(|_| if rng.random::<f64>() < p { 0.0 } else { keep });
        let out = self.value(x) * &mask;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Softmax of each column taken separately within every row group.
    pub fn grouped_softmax(&mut self, x: Var, groups: &[usize]) -> Result<Var, DiffError> {
        let n_groups = groups.iter().max().map_or(0, |m| m + 1);
        check_index("grouped_softmax", groups, self.value(x).nrows(), usize::MAX)?;
        let (p, _) = grouped_softmax_values(self.value(x), groups, n_groups);
        Ok(self.push(p, Op::GroupedSoftmax { x, groups: groups.to_vec(), n_groups }))
    }

    pub fn grouped_log_softmax(&mut self, x: Var, groups: &[usize]) -> Result<Var, DiffError> {
        let n_groups = groups.iter().max().map_or(0, |m| m + 1);
        check_index("grouped_log_softmax", groups, self.value(x).nrows(), usize::MAX)?;
        let (_, logp) = grouped_softmax_values(self.value(x), groups, n_groups);
        Ok(self.push(logp, Op::GroupedLogSoftmax { x, groups: groups.to_vec(), n_groups }))
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, DiffError> {
        let a = self.value(x);
        check_index("gather_rows", idx, idx.len(), a.nrows())?;
        let out = a.select(Axis(0), idx);
        Ok(self.push(out, Op::Gather { x, idx: idx.to_vec() }))
    }

    /// Output row `j` is the sum of the rows `i` of `x` with `idx[i] == j`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], n_out: usize) -> Result<Var, DiffError> {
        let a = self.value(x);
        check_index("scatter_add_rows", idx, a.nrows(), n_out)?;
        let mut out = Array2::zeros((n_out, a.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            let mut dst = out.row_mut(j);
            dst += &a.row(i);
        }
        Ok(self.push(out, Op::ScatterAdd { x, idx: idx.to_vec() }))
    }

    /// Like [`Tape::scatter_add_rows`] but averaged; empty outputs stay zero.
    pub fn scatter_mean_rows(&mut self, x: Var, idx: &[usize], n_out: usize) -> Result<Var, DiffError> {
        let a = self.value(x);
        check_index("scatter_mean_rows", idx, a.nrows(), n_out)?;
        let mut counts = vec![0.0; n_out];
        for &j in idx {
            counts[j] += 1.0;
        }
        let mut out = Array2::zeros((n_out, a.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            let mut dst = out.row_mut(j);
            dst.scaled_add(1.0 / counts[j], &a.row(i));
        }
        Ok(self.push(out, Op::ScatterMean { x, idx: idx.to_vec(), counts }))
    }

    /// Per-head dot product: `out[n, h] = sum_{k in head h} x[n, k] a[0, k]`.
    pub fn head_dot(&mut self, x: Var, a: Var, heads: usize) -> Result<Var, DiffError> {
        let (xv, av) = (self.value(x), self.value(a));
        if av.nrows() != 1 || av.ncols() != xv.ncols() {
            return Err(DiffError::Shape { op: "head_dot", a: shape(xv), b: shape(av) });
        }
        let hd = head_width("head_dot", xv.ncols(), heads)?;
        let mut out = Array2::zeros((xv.nrows(), heads));
        for n in 0..xv.nrows() {
            for k in 0..xv.ncols() {
                out[[n, k / hd]] += xv[[n, k]] * av[[0, k]];
            }
        }
        Ok(self.push(out, Op::HeadDot { x, a, heads }))
    }

    /// Per-head scaling: `out[n, k] = w[n, head(k)] v[n, k]`.
    pub fn head_scale(&mut self, w: Var, v: Var) -> Result<Var, DiffError> {
        let (wv, vv) = (self.value(w), self.value(v));
        if wv.nrows() != vv.nrows() {
            return Err(DiffError::Shape { op: "head_scale", a: shape(wv), b: shape(vv) });
        }
        let hd = head_width("head_scale", vv.ncols(), wv.ncols())?;
        let mut out = vv.clone();
        for n in 0..vv.nrows() {
            for k in 0..vv.ncols() {
                out[[n, k]] *= wv[[n, k / hd]];
            }
        }
        Ok(self.push(out, Op::HeadScale { w, v }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::Invalid { op: "concat_cols", msg: "no inputs".into() })?;
        let rows = self.value(first).nrows();
        for p in parts {
            if self.value(*p).nrows() != rows {
                return Err(DiffError::Shape { op: "concat_cols", a: self.shape(first), b: self.shape(*p) });
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("rows checked");
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let a = self.value(x);
        let out = Array2::from_elem((1, 1), a.sum() / a.len().max(1) as f64);
        self.push(out, Op::Mean(x))
    }

    /// Elementwise Huber penalty with threshold `delta`.
    pub fn huber(&mut self, x: Var, delta: f64) -> Var {
        let out = self.value(x).mapv(|v| {
            let a = v.abs();
            if a <= delta {
                0.5 * v * v
            } else {
                delta * (a - 0.5 * delta)
            }
        });
        self.push(out, Op::Huber(x, delta))
    }

    /// Gradients of a scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Array2<f64>>>, DiffError> {
        let ls = self.shape(loss);
        if ls != (1, 1) {
            return Err(DiffError::NonScalar(ls));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    /// Accumulates `d loss / d param` into the store for every parameter on the tape.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), DiffError> {
        let grads = self.gradients(loss)?;
        for (v, id) in &self.params {
            if let Some(g) = &grads[v.0] {
                store.params[id.0].grad += g;
            }
        }
        Ok(())
    }

    fn backprop(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
            match &mut grads[v.0] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            }
        }
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(x, w) => {
                let dx = g.dot(&self.value(*w).t());
                let dw = self.value(*x).t().dot(g);
                acc(grads, *x, dx);
                acc(grads, *w, dw);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * self.value(*b));
                acc(grads, *b, g * self.value(*a));
            }
            Op::AddRow(x, r) => {
                acc(grads, *x, g.clone());
                acc(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulRow(x, r) => {
                acc(grads, *x, g * self.value(*r));
                let dr = (g * self.value(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(grads, *r, dr);
            }
            Op::Scale(x, k) => acc(grads, *x, g * *k),
            Op::LeakyRelu(x, slope) => {
                let mut d = g.clone();
                d.zip_mut_with(self.value(*x), |d, &v| {
                    if v <= 0.0 {
                        *d *= slope
                    }
                });
                acc(grads, *x, d);
            }
            Op::Exp(x) => acc(grads, *x, g * &node.value),
            Op::LayerNorm { x, xhat, inv_std } => {
                let (rows, cols) = xhat.dim();
                let n = cols as f64;
                let mut d = Array2::zeros((rows, cols));
                for r in 0..rows {
                    let gs: f64 = g.row(r).sum();
                    let gx: f64 = g.row(r).iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        d[[r, c]] = inv_std[r] / n * (n * g[[r, c]] - gs - xhat[[r, c]] * gx);
                    }
                }
                acc(grads, *x, d);
            }
            Op::Dropout { x, mask } => acc(grads, *x, g * mask),
            Op::GroupedSoftmax { x, groups, n_groups } => {
                let y = &node.value;
                let (rows, cols) = y.dim();
                let mut d = Array2::zeros((rows, cols));
                let mut dot = vec![0.0; *n_groups];
                for c in 0..cols {
                    dot.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..rows {
                        dot[groups[r]] += y[[r, c]] * g[[r, c]];
                    }
                    for r in 0..rows {
                        d[[r, c]] = y[[r, c]] * (g[[r, c]] - dot[groups[r]]);
                    }
                }
                acc(grads, *x, d);
            }
            Op::GroupedLogSoftmax { x, groups, n_groups } => {
                let y = &node.value;
                let (rows, cols) = y.dim();
                let mut d = Array2::zeros((rows, cols));
                let mut gsum = vec![0.0; *n_groups];
                for c in 0..cols {
                    gsum.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..rows {
                        gsum[groups[r]] += g[[r, c]];
                    }
                    for r in 0..rows {
                        d[[r, c]] = g[[r, c]] - y[[r, c]].exp() * gsum[groups[r]];
                    }
                }
                acc(grads, *x, d);
            }
            Op::Gather { x, idx } => {
                let mut d = Array2::zeros(self.shape(*x));
                for (i, &j) in idx.iter().enumerate() {
                    let mut dst = d.row_mut(j);
                    dst += &g.row(i);
                }
                acc(grads, *x, d);
            }
            Op::ScatterAdd { x, idx } => acc(grads, *x, g.select(Axis(0), idx)),
            Op::ScatterMean { x, idx, counts } => {
                let mut d = g.select(Axis(0), idx);
                for (i, &j) in idx.iter().enumerate() {
                    d.row_mut(i).mapv_inplace(|v| v / counts[j]);
                }
                acc(grads, *x, d);
            }
            Op::HeadDot { x, a, heads } => {
                let (xv, av) = (self.value(*x), self.value(*a));
                let hd = xv.ncols() / heads;
                let mut dx = Array2::zeros(xv.dim());
                let mut da = Array2::zeros(av.dim());
                for n in 0..xv.nrows() {
                    for k in 0..xv.ncols() {
                        let gh = g[[n, k / hd]];
                        dx[[n, k]] = gh * av[[0, k]];
                        da[[0, k]] += gh * xv[[n, k]];
                    }
                }
                acc(grads, *x, dx);
                acc(grads, *a, da);
            }
            Op::HeadScale { w, v } => {
                let (wv, vv) = (self.value(*w), self.value(*v));
                let hd = vv.ncols() / wv.ncols();
                let mut dw = Array2::zeros(wv.dim());
                let mut dv = Array2::zeros(vv.dim());
                for n in 0..vv.nrows() {
                    for k in 0..vv.ncols() {
                        dv[[n, k]] = g[[n, k]] * wv[[n, k / hd]];
                        dw[[n, k / hd]] += g[[n, k]] * vv[[n, k]];
                    }
                }
                acc(grads, *w, dw);
                acc(grads, *v, dv);
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    acc(grads, *p, g.slice(s![.., c0..c0 + w]).to_owned());
                    c0 += w;
                }
            }
            Op::Sum(x) => acc(grads, *x, Array2::from_elem(self.shape(*x), g[[0, 0]])),
            Op::Mean(x) => {
                let sh = self.shape(*x);
                let n = (sh.0 * sh.1).max(1) as f64;
                acc(grads, *x, Array2::from_elem(sh, g[[0, 0]] / n));
            }
            Op::Huber(x, delta) => {
                let d = self.value(*x).mapv(|v| v.clamp(-delta, *delta)) * g;
                acc(grads, *x, d);
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    /// First and second moment estimates.
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub step: u64,
}

/// Named parameters with their gradients and optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
    metadata: BTreeMap<String, String>,
}

const MAGIC: &[u8; 4] = b"TSCK";
const VERSION: u32 = 1;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) -> Result<ParamId, DiffError> {
        if self.by_name.contains_key(name) {
            return Err(DiffError::DuplicateParam(name.to_string()));
        }
        let z = Array2::zeros(value.dim());
        self.params.push(Param {
            name: name.to_string(),
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
            step: 0,
        });
        self.by_name.insert(name.to_string(), self.params.len() - 1);
        Ok(ParamId(self.params.len() - 1))
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: Shape,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..=bound));
        self.add(name, value)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, DiffError> {
        self.by_name.get(name).map(|&i| ParamId(i)).ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: &str, value: &str) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.grad_norm();
        if n > max_norm && n > 0.0 {
            let k = max_norm / n;
            for p in &mut self.params {
                p.grad *= k;
            }
        }
        n
    }

    /// One AdamW update with bias correction and decoupled weight decay;
    /// gradients are zeroed afterwards.
    pub fn adamw_step(&mut self, opt: &AdamW) {
        for p in &mut self.params {
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - opt.beta1.powi(t);
            let c2 = 1.0 - opt.beta2.powi(t);
            let Param { value, grad, m, v, .. } = p;
            ndarray::Zip::from(value).and(&*grad).and(m).and(v).for_each(|w, &g, m, v| {
                *w -= opt.lr * opt.weight_decay * *w;
                *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
                *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
                *w -= opt.lr * (*m / c1) / ((*v / c2).sqrt() + opt.eps);
            });
            grad.fill(0.0);
        }
    }

    /// Overwrites parameter values (not optimizer state) from a store of identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), DiffError> {
        if self.params.len() != other.params.len() {
            return Err(DiffError::Invalid { op: "copy_values_from", msg: "parameter count differs".into() });
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            check_same("copy_values_from", &a.value, &b.value)?;
            a.value.assign(&b.value);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DiffError> {
        fn put_u32<W: Write>(w: &mut W, x: u32) -> std::io::Result<()> {
            w.write_all(&x.to_le_bytes())
        }
        fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
            put_u32(w, s.len() as u32)?;
            w.write_all(s.as_bytes())
        }
        fn put_arr<W: Write>(w: &mut W, a: &Array2<f64>) -> std::io::Result<()> {
            for x in a.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        }
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, self.metadata.len() as u32)?;
        for (k, v) in &self.metadata {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        put_u32(w, self.params.len() as u32)?;
        for p in &self.params {
            put_str(w, &p.name)?;
            put_u32(w, p.value.nrows() as u32)?;
            put_u32(w, p.value.ncols() as u32)?;
            w.write_all(&p.step.to_le_bytes())?;
            put_arr(w, &p.value)?;
            put_arr(w, &p.m)?;
            put_arr(w, &p.v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DiffError> {
        fn bytes<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], DiffError> {
            let mut b = [0u8; N];
            r.read_exact(&mut b).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
            Ok(b)
        }
        fn get_u32<R: Read>(r: &mut R) -> Result<u32, DiffError> {
            Ok(u32::from_le_bytes(bytes::<R, 4>(r)?))
        }
        fn get_str<R: Read>(r: &mut R) -> Result<String, DiffError> {
            let n = get_u32(r)? as usize;
            let mut b = vec![0u8; n];
            r.read_exact(&mut b).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
            String::from_utf8(b).map_err(|e| DiffError::Checkpoint(e.to_string()))
        }
        fn get_arr<R: Read>(r: &mut R, sh: Shape) -> Result<Array2<f64>, DiffError> {
            let mut v = Vec::with_capacity(sh.0 * sh.1);
            for _ in 0..sh.0 * sh.1 {
                v.push(f64::from_le_bytes(bytes::<R, 8>(r)?));
            }
            Ok(Array2::from_shape_vec(sh, v).expect("length matches shape"))
        }
        if &bytes::<R, 4>(r)? != MAGIC {
            return Err(DiffError::Checkpoint("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(DiffError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut store = ParamStore::new();
        for _ in 0..get_u32(r)? {
            let k = get_str(r)?;
            let v = get_str(r)?;
            store.metadata.insert(k, v);
        }
        for _ in 0..get_u32(r)? {
            let name = get_str(r)?;
            let sh = (get_u32(r)? as usize, get_u32(r)? as usize);
            let step = u64::from_le_bytes(bytes::<R, 8>(r)?);
            let value = get_arr(r, sh)?;
            let id = store.add(&name, value).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
            let p = store.get_mut(id);
            p.step = step;
            p.m = get_arr(r, sh)?;
            p.v = get_arr(r, sh)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DiffError> {
        let buf = std::fs::read(path)?;
        Self::read_from(&mut buf.as_slice())
    }
}

/// Worst relative error between analytic gradients and central finite
/// differences of the scalar built by `f`, over every entry of every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// vanishing gradients from amplifying round-off.
pub fn gradcheck<F>(store: &mut ParamStore, eps: f64, floor: f64, f: F) -> Result<GradReport, DiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, DiffError>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Array2<f64>> = store.params.iter().map(|p| p.grad.clone()).collect();
    store.zero_grad();
    let eval = |store: &ParamStore| -> Result<f64, DiffError> {
        let mut t = Tape::new();
        let l = f(&mut t, store)?;
        Ok(t.scalar(l))
    };
    let mut report = GradReport::default();
    for pi in 0..store.params.len() {
        let (rows, cols) = store.params[pi].value.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.params[pi].value[[r, c]];
                store.params[pi].value[[r, c]] = orig + eps;
                let up = eval(store)?;
                store.params[pi].value[[r, c]] = orig - eps;
                let down = eval(store)?;
                store.params[pi].value[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[pi][[r, c]];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                report.checked += 1;
                if rel > report.worst {
                    report.worst = rel;
                    report.worst_param = store.params[pi].name.clone();
                }
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub worst: f64,
    pub worst_param: String,
    pub checked: usize,
}
