use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{log_softmax_in_place, Tensor};

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add { a: Var, b: Var, broadcast: bool },
    Sub(Var, Var),
    Mul { a: Var, b: Var, broadcast: bool },
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    NormRows { x: Var, inv_std: Vec<f64> },
    Sum(Var),
    NllRows { logp: Var, targets: Vec<Option<usize>> },
    BceLogits { logits: Var, labels: Vec<f64> },
}

struct Node {
    value: Value,
    op: Op,
}

/// A tape for one forward pass.
///
/// Parameters are borrowed from a [`ParamStore`] rather than copied; each
/// parameter maps to a single leaf node per graph so its gradient is the
/// gradient of that node.
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::detached()
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    /// A graph with no parameter store; only leaves can be differentiated.
    pub fn detached() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .params
                .expect("param node without store")
                .get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// Input or constant tensor. Gradients are still tracked for leaves so
    /// callers can differentiate with respect to inputs.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.leaf(Tensor::scalar(x))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        assert!(self.params.is_some(), "detached graph has no parameters");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b)).map_err(|_| self.mismatch("matmul", a, b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn broadcast_ok(&self, a: Var, b: Var) -> Option<bool> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar == br && ac == bc {
            Some(false)
        } else if br == 1 && bc == ac {
            Some(true)
        } else {
            None
        }
    }

    /// Elementwise `a + b`; `b` may be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = self.broadcast_ok(a, b).ok_or_else(|| self.mismatch("add", a, b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + if broadcast { bv.data()[i % c] } else { bv.data()[i] })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add { a, b, broadcast }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.broadcast_ok(a, b) != Some(false) {
            return Err(self.mismatch("sub", a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise `a * b`; `b` may be a single row broadcast over `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = self.broadcast_ok(a, b).ok_or_else(|| self.mismatch("mul", a, b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * if broadcast { bv.data()[i % c] } else { bv.data()[i] })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul { a, b, broadcast }))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(out, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols().max(1);
        for row in out.data_mut().chunks_mut(c) {
            log_softmax_in_place(row);
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.mismatch("concat_cols", parts[0], p));
            }
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(self.mismatch("concat_rows", parts[0], p));
            }
            rows += self.shape(p).0;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start + len > cols {
            return Err(TensorError::OutOfRange {
                op: "slice_cols",
                index: start + len,
                size: cols,
            });
        }
        let av = self.value(a);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start + len > rows {
            return Err(TensorError::OutOfRange {
                op: "slice_rows",
                index: start + len,
                size: rows,
            });
        }
        let data = self.value(a).data()[start * cols..(start + len) * cols].to_vec();
        let out = Tensor::new(vec![len, cols], data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Embedding lookup: one output row per id.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(table);
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::OutOfRange {
                    op: "gather_rows",
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        Ok(self.push(out, Op::GatherRows(table, ids.to_vec())))
    }

    /// Zero-mean, unit-variance normalization of each row.
    pub fn norm_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let c = out.cols().max(1);
        let mut inv_std = Vec::with_capacity(out.rows());
        for row in out.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(out, Op::NormRows { x, inv_std })
    }

    /// Layer normalization with a learned row gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let n = self.norm_rows(x);
        let scaled = self.mul(n, gain)?;
        self.add(scaled, bias)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `sum_i -logp[i, target_i]` over rows with a target.
    pub fn nll_rows(&mut self, logp: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (rows, cols) = self.shape(logp);
        if targets.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "nll_rows",
                left: vec![rows, cols],
                right: vec![targets.len()],
            });
        }
        let lp = self.value(logp);
        let mut total = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= cols {
                    return Err(TensorError::OutOfRange {
                        op: "nll_rows",
                        index: t,
                        size: cols,
                    });
                }
                total -= lp.at(r, t);
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::NllRows {
                logp,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Summed cross-entropy of `logits` rows against class targets.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let lp = self.log_softmax_rows(logits);
        self.nll_rows(lp, targets)
    }

    /// Cross-entropy of a single row of logits: `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.cross_entropy_rows(logits, &[Some(target)])
    }

    /// Summed binary cross-entropy of sigmoid(logits) against `labels` in
    /// {0, 1}, computed in the numerically stable softplus form.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                left: z.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let total: f64 = z
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::BceLogits {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse pass from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut param_nodes: Vec<(ParamId, Var)> =
            self.param_nodes.iter().map(|(&p, &v)| (p, v)).collect();
        param_nodes.sort();
        Ok(Gradients { grads, param_nodes })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let n = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                // dA = dC * B^T
                let da = self.acc(grads, *a);
                for r in 0..n {
                    let grow = &g[r * m..(r + 1) * m];
                    for p in 0..k {
                        let brow = &bv.data()[p * m..(p + 1) * m];
                        da[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                // dB = A^T * dC
                let db = self.acc(grads, *b);
                for r in 0..n {
                    let grow = &g[r * m..(r + 1) * m];
                    for p in 0..k {
                        let a_rp = av.data()[r * k + p];
                        if a_rp == 0.0 {
                            continue;
                        }
                        for (d, &x) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                            *d += a_rp * x;
                        }
                    }
                }
            }
            Op::Add { a, b, broadcast } => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(g) {
                    *d += x;
                }
                let c = out.cols();
                let db = self.acc(grads, *b);
                if *broadcast {
                    for (idx, x) in g.iter().enumerate() {
                        db[idx % c] += x;
                    }
                } else {
                    for (d, x) in db.iter_mut().zip(g) {
                        *d += x;
                    }
                }
            }
            Op::Sub(a, b) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(g) {
                    *d += x;
                }
                for (d, x) in self.acc(grads, *b).iter_mut().zip(g) {
                    *d -= x;
                }
            }
            Op::Mul { a, b, broadcast } => {
                let c = out.cols();
                let (av, bv) = (self.value(*a), self.value(*b));
                let bidx = |idx: usize| if *broadcast { idx % c } else { idx };
                let da = self.acc(grads, *a);
                for (idx, x) in g.iter().enumerate() {
                    da[idx] += x * bv.data()[bidx(idx)];
                }
                let db = self.acc(grads, *b);
                for (idx, x) in g.iter().enumerate() {
                    db[bidx(idx)] += x * av.data()[idx];
                }
            }
            Op::Scale(a, k) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(g) {
                    *d += k * x;
                }
            }
            Op::Tanh(a) => {
                for ((d, x), y) in self.acc(grads, *a).iter_mut().zip(g).zip(out.data()) {
                    *d += x * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                for ((d, x), y) in self.acc(grads, *a).iter_mut().zip(g).zip(out.data()) {
                    *d += x * y * (1.0 - y);
                }
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                for ((d, x), &v) in self.acc(grads, *a).iter_mut().zip(g).zip(av.data()) {
                    let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
                    let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                    *d += x * (0.5 * (1.0 + t) + 0.5 * v * dt);
                }
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols().max(1);
                let da = self.acc(grads, *a);
                for ((drow, grow), yrow) in da.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    for ((d, x), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += y * (x - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let c = out.cols().max(1);
                let da = self.acc(grads, *a);
                for ((drow, grow), yrow) in da.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c)) {
                    let total: f64 = grow.iter().sum();
                    for ((d, x), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += x - y.exp() * total;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let dp = self.acc(grads, p);
                    for (r, drow) in dp.chunks_mut(pc.max(1)).enumerate() {
                        for (j, d) in drow.iter_mut().enumerate() {
                            *d += g[r * total + offset + j];
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    for (d, x) in self.acc(grads, p).iter_mut().zip(&g[offset..offset + n]) {
                        *d += x;
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let (len, full) = (out.cols(), self.value(*a).cols());
                let da = self.acc(grads, *a);
                for (r, grow) in g.chunks(len.max(1)).enumerate() {
                    for (j, x) in grow.iter().enumerate() {
                        da[r * full + start + j] += x;
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let c = out.cols();
                let da = self.acc(grads, *a);
                for (d, x) in da[start * c..start * c + g.len()].iter_mut().zip(g) {
                    *d += x;
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                let da = self.acc(grads, *a);
                for i in 0..r {
                    for j in 0..c {
                        da[j * r + i] += g[i * c + j];
                    }
                }
            }
            Op::GatherRows(table, ids) => {
                let c = out.cols();
                let dt = self.acc(grads, *table);
                for (k, &id) in ids.iter().enumerate() {
                    for j in 0..c {
                        dt[id * c + j] += g[k * c + j];
                    }
                }
            }
            Op::NormRows { x, inv_std } => {
                let c = out.cols().max(1);
                let dx = self.acc(grads, *x);
                for (r, ((drow, grow), yrow)) in dx
                    .chunks_mut(c)
                    .zip(g.chunks(c))
                    .zip(out.data().chunks(c))
                    .enumerate()
                {
                    let mean_g = grow.iter().sum::<f64>() / c as f64;
                    let mean_gy = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += inv_std[r] * (gv - mean_g - y * mean_gy);
                    }
                }
            }
            Op::Sum(a) => {
                for d in self.acc(grads, *a).iter_mut() {
                    *d += g[0];
                }
            }
            Op::NllRows { logp, targets } => {
                let c = self.value(*logp).cols();
                let dl = self.acc(grads, *logp);
                for (r, t) in targets.iter().enumerate() {
                    if let Some(t) = t {
                        dl[r * c + t] -= g[0];
                    }
                }
            }
            Op::BceLogits { logits, labels } => {
                let zv = self.value(*logits);
                let dz = self.acc(grads, *logits);
                for ((d, &z), &y) in dz.iter_mut().zip(zv.data()).zip(labels) {
                    *d += g[0] * (sigmoid(z) - y);
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_nodes: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to any node, `None` if the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0)?.as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        let v = self.param_nodes.iter().find(|(p, _)| *p == id)?.1;
        self.wrt(v)
    }

    /// Per-parameter gradients indexed by [`ParamId`], for the optimizer.
    pub fn into_param_grads(mut self, n_params: usize) -> Vec<Option<Vec<f64>>> {
        let mut out = vec![None; n_params];
        for (p, v) in &self.param_nodes {
            if p.0 < n_params {
                out[p.0] = self.grads[v.0].take();
            }
        }
        out
    }
}

