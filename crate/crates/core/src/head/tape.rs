//! A small reverse-mode tape over row-major 2D float64 tensors.

use crate::error::{Error, Result};
use crate::mano::{forward_vjp, forward_with_cache, ForwardCache, HandRig, ManoParams, NUM_OUTPUT_JOINTS, PARAM_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, grad: None })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![v],
            grad: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`.
    MatMulNT(Var, Var),
    /// Adds a `1 × c` row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// Column-wise max with the winning row per column; no rows gives zeros.
    ColMax(Var, Vec<usize>),
    SoftmaxRows(Var),
    Reshape(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Sum(Var),
    /// Mean over rows of the 1-norm of `a - target`.
    L1PointMean(Var, Vec<f64>),
    /// Mean over rows of the 2-norm of `a - target`.
    L2PointMean(Var, Vec<f64>),
    /// 2-norm of `a - target` over all entries.
    L2Dist(Var, Vec<f64>),
    /// Posed joints, vertices and wrist stacked as rows.
    Mano(Var, &'a HandRig, Box<ForwardCache>),
}

struct Node<'a> {
    value: Tensor,
    op: Op<'a>,
}

/// Parameter gradients from one backward pass, indexed by parameter id.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub by_param: Vec<(usize, Vec<f64>)>,
}

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    consumed: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// `c = alpha·a·b + beta·c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the strides describe matrices that fit inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn acc(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(v) => v.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op<'a>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient stored on a node by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: usize, t: Tensor) -> Var {
        self.push(t, Op::Param(id))
    }

    fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
        Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(Self::shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.value(a).data, (k, 1), &self.value(b).data, (n, 1), &mut out, 0.0);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(Self::shape_err("matmul_nt", (m, k), (n, k2)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.value(a).data, (k, 1), &self.value(b).data, (1, k), &mut out, 0.0);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((m, n), (r, n2)) = (self.dims(a), self.dims(row));
        if r != 1 || n != n2 {
            return Err(Self::shape_err("add_row", (m, n), (r, n2)));
        }
        let b = &self.value(row).data;
        let out: Vec<f64> = self.value(a).data.iter().enumerate().map(|(i, v)| v + b[i % n]).collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(a, row)))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op<'a>) -> Result<Var> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Self::shape_err(what, da, db));
        }
        let out = self.value(a).data.iter().zip(&self.value(b).data).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(Tensor::matrix(da.0, da.1, out)?, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op<'a>) -> Var {
        let t = self.value(a);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        };
        self.push(out, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |v| v * k, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn col_max(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let d = &self.value(a).data;
        let mut arg = vec![usize::MAX; n];
        let mut out = vec![0.0; n];
        for (c, (o, g)) in out.iter_mut().zip(arg.iter_mut()).enumerate() {
            for r in 0..m {
                let v = d[r * n + c];
                if *g == usize::MAX || v > *o {
                    *o = v;
                    *g = r;
                }
            }
        }
        self.push(Tensor::zeros(1, n).with_data(out), Op::ColMax(a, arg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut out = self.value(a).data.clone();
        for row in out.chunks_exact_mut(n.max(1)).take(m) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(Tensor::zeros(m, n).with_data(out), Op::SoftmaxRows(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let data = self.value(a).data.clone();
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::Reshape(a)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(Self::shape_err("slice_cols", (m, n), (start, len)));
        }
        let d = &self.value(a).data;
        let out = (0..m).flat_map(|r| d[r * n + start..r * n + start + len].iter().copied()).collect();
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > m {
            return Err(Self::shape_err("slice_rows", (m, n), (start, len)));
        }
        let out = self.value(a).data[start * n..(start + len) * n].to_vec();
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::SliceRows(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.dims(parts[0]).0;
        if let Some(&p) = parts.iter().find(|&&p| self.dims(p).0 != m) {
            return Err(Self::shape_err("concat_cols", (m, 0), self.dims(p)));
        }
        let n: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p).data[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    fn target_check(&self, a: Var, target: &[f64], cols: Option<usize>, what: &str) -> Result<()> {
        let (m, n) = self.dims(a);
        if target.len() != m * n || cols.is_some_and(|c| c != n) || m == 0 {
            return Err(Error::ShapeMismatch(format!("{what}: {m}x{n} vs target of {}", target.len())));
        }
        Ok(())
    }

    pub fn l1_point_mean(&mut self, a: Var, target: Vec<f64>) -> Result<Var> {
        self.target_check(a, &target, Some(3), "l1_point_mean")?;
        let d = &self.value(a).data;
        let rows = d.len() / 3;
        let mut sum = 0.0;
        for r in 0..rows {
            let i = r * 3;
            sum += (d[i] - target[i]).abs() + (d[i + 1] - target[i + 1]).abs() + (d[i + 2] - target[i + 2]).abs();
        }
        Ok(self.push(Tensor::scalar(sum / rows as f64), Op::L1PointMean(a, target)))
    }

    pub fn l2_point_mean(&mut self, a: Var, target: Vec<f64>) -> Result<Var> {
        self.target_check(a, &target, Some(3), "l2_point_mean")?;
        let d = &self.value(a).data;
        let rows = d.len() / 3;
        let mut sum = 0.0;
        for r in 0..rows {
            let mut sq = 0.0;
            for c in 0..3 {
                let e = d[r * 3 + c] - target[r * 3 + c];
                sq += e * e;
            }
            sum += sq.sqrt();
        }
        Ok(self.push(Tensor::scalar(sum / rows as f64), Op::L2PointMean(a, target)))
    }

    pub fn l2_dist(&mut self, a: Var, target: Vec<f64>) -> Result<Var> {
        self.target_check(a, &target, None, "l2_dist")?;
        let d = &self.value(a).data;
        let sq: f64 = d.iter().zip(&target).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(sq.sqrt()), Op::L2Dist(a, target)))
    }

    /// Runs the hand rig on a `1 × 31` parameter row. The result stacks the
    /// 20 joints, the vertices and the wrist as `3`-column rows.
    pub fn mano(&mut self, params: Var, rig: &'a HandRig) -> Result<Var> {
        let p = ManoParams::from_vector(&self.value(params).data, rig.side())?;
        let (out, cache) = forward_with_cache(rig, &p)?;
        let rows = out.joints.len() + out.vertices.len() + 1;
        let mut data = Vec::with_capacity(rows * 3);
        for v in out.joints.iter().chain(&out.vertices).chain(std::iter::once(&out.wrist)) {
            data.extend_from_slice(v);
        }
        Ok(self.push(Tensor::matrix(rows, 3, data)?, Op::Mano(params, rig, Box::new(cache))))
    }

    /// Reverse pass from a scalar. Fills `grad` on every node that reaches
    /// `loss` and returns the parameter gradients in parameter-id order.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeExhausted);
        }
        self.consumed = true;
        if self.value(loss).data.len() != 1 {
            return Err(Error::ShapeMismatch("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut by_param = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = &node.value;
            let (m, n) = (val.rows(), val.cols());
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => by_param.push((*id, g.clone())),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let k = ta.cols();
                    let mut ga = vec![0.0; m * k];
                    // dA = dC · Bᵀ, dB = Aᵀ · dC
                    gemm(m, n, k, &g, (n, 1), &tb.data, (1, n), &mut ga, 0.0);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, &ta.data, (1, k), &g, (n, 1), &mut gb, 0.0);
                    acc(&mut grads[a.0], &ga);
                    acc(&mut grads[b.0], &gb);
                }
                Op::MatMulNT(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let k = ta.cols();
                    // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, &g, (n, 1), &tb.data, (k, 1), &mut ga, 0.0);
                    let mut gb = vec![0.0; n * k];
                    gemm(n, m, k, &g, (1, n), &ta.data, (k, 1), &mut gb, 0.0);
                    acc(&mut grads[a.0], &ga);
                    acc(&mut grads[b.0], &gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = vec![0.0; n];
                    for r in 0..m {
                        for c in 0..n {
                            gr[c] += g[r * n + c];
                        }
                    }
                    acc(&mut grads[a.0], &g);
                    acc(&mut grads[row.0], &gr);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], &g);
                    acc(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    acc(&mut grads[a.0], &g);
                    acc(&mut grads[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let (da, db) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                    let ga: Vec<f64> = g.iter().zip(db).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(da).map(|(x, y)| x * y).collect();
                    acc(&mut grads[a.0], &ga);
                    acc(&mut grads[b.0], &gb);
                }
                Op::Scale(a, k) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * k).collect();
                    acc(&mut grads[a.0], &ga);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> = g.iter().zip(&val.data).map(|(x, &y)| if y > 0.0 { *x } else { 0.0 }).collect();
                    acc(&mut grads[a.0], &ga);
                }
                Op::ColMax(a, arg) => {
                    let ta = &self.nodes[a.0].value;
                    let mut ga = vec![0.0; ta.data.len()];
                    let w = ta.cols();
                    for (c, &r) in arg.iter().enumerate() {
                        if r != usize::MAX {
                            ga[r * w + c] += g[c];
                        }
                    }
                    acc(&mut grads[a.0], &ga);
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = vec![0.0; m * n];
                    for r in 0..m {
                        let y = &val.data[r * n..(r + 1) * n];
                        let gy = &g[r * n..(r + 1) * n];
                        let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                        for c in 0..n {
                            ga[r * n + c] = y[c] * (gy[c] - dot);
                        }
                    }
                    acc(&mut grads[a.0], &ga);
                }
                Op::Reshape(a) => acc(&mut grads[a.0], &g),
                Op::SliceCols(a, start) => {
                    let w = self.nodes[a.0].value.cols();
                    let mut ga = vec![0.0; m * w];
                    for r in 0..m {
                        ga[r * w + start..r * w + start + n].copy_from_slice(&g[r * n..(r + 1) * n]);
                    }
                    acc(&mut grads[a.0], &ga);
                }
                Op::SliceRows(a, start) => {
                    let ta = &self.nodes[a.0].value;
                    let mut ga = vec![0.0; ta.data.len()];
                    ga[start * n..(start + m) * n].copy_from_slice(&g);
                    acc(&mut grads[a.0], &ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = self.nodes[p.0].value.cols();
                        let gp: Vec<f64> = (0..m).flat_map(|r| g[r * n + off..r * n + off + c].iter().copied()).collect();
                        acc(&mut grads[p.0], &gp);
                        off += c;
                    }
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.data.len();
                    acc(&mut grads[a.0], &vec![g[0]; len]);
                }
                Op::L1PointMean(a, t) => {
                    let d = &self.nodes[a.0].value.data;
                    let rows = (d.len() / 3) as f64;
                    let ga: Vec<f64> = d
                        .iter()
                        .zip(t)
                        .map(|(x, y)| {
                            let e = x - y;
                            let s = if e > 0.0 {
                                1.0
                            } else if e < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            g[0] * s / rows
                        })
                        .collect();
                    acc(&mut grads[a.0], &ga);
                }
                Op::L2PointMean(a, t) => {
                    let d = &self.nodes[a.0].value.data;
                    let rows = d.len() / 3;
                    let mut ga = vec![0.0; d.len()];
                    for r in 0..rows {
                        let e: Vec<f64> = (0..3).map(|c| d[r * 3 + c] - t[r * 3 + c]).collect();
                        let norm = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                        if norm > 0.0 {
                            for c in 0..3 {
                                ga[r * 3 + c] = g[0] * e[c] / norm / rows as f64;
                            }
                        }
                    }
                    acc(&mut grads[a.0], &ga);
                }
                Op::L2Dist(a, t) => {
                    let d = &self.nodes[a.0].value.data;
                    let norm = val.data[0];
                    let ga: Vec<f64> = if norm > 0.0 {
                        d.iter().zip(t).map(|(x, y)| g[0] * (x - y) / norm).collect()
                    } else {
                        vec![0.0; d.len()]
                    };
                    acc(&mut grads[a.0], &ga);
                }
                Op::Mano(p, rig, cache) => {
                    let row = |i: usize| [g[i * 3], g[i * 3 + 1], g[i * 3 + 2]];
                    let nj = NUM_OUTPUT_JOINTS;
                    let gj: Vec<[f64; 3]> = (0..nj).map(row).collect();
                    let gv: Vec<[f64; 3]> = (nj..m - 1).map(row).collect();
                    let gp = forward_vjp(rig, cache, &gj, &gv, row(m - 1))?;
                    debug_assert_eq!(gp.len(), PARAM_DIM);
                    acc(&mut grads[p.0], &gp);
                }
            }
            self.nodes[i].value.grad = Some(g);
        }
        by_param.sort_by_key(|(id, _)| *id);
        Ok(Gradients { by_param })
    }
}

impl Tensor {
    fn with_data(mut self, data: Vec<f64>) -> Self {
        self.data = data;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut q = x.to_vec();
                p[i] += h;
                q[i] -= h;
                (f(&p) - f(&q)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn sum_of_parameter_gives_ones() {
        let mut t = Tape::new();
        let p = t.param(0, Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.by_param, vec![(0, vec![1.0; 6])]);
        assert!(matches!(t.backward(s), Err(Error::TapeExhausted)));
    }

    #[test]
    fn squared_norm_of_wx() {
        let w = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let x = vec![1.0, -2.0, 0.5];
        let mut t = Tape::new();
        let wv = t.param(0, Tensor::matrix(2, 3, w.clone()).unwrap());
        let xv = t.leaf(Tensor::matrix(3, 1, x.clone()).unwrap());
        let y = t.matmul(wv, xv).unwrap();
        let sq = t.mul(y, y).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        let wx = [w[0] * x[0] + w[1] * x[1] + w[2] * x[2], w[3] * x[0] + w[4] * x[1] + w[5] * x[2]];
        let expect: Vec<f64> = (0..6).map(|i| 2.0 * wx[i / 3] * x[i % 3]).collect();
        assert_eq!(g.by_param[0].1, expect);
    }

    /// Builds a graph touching every generic op and compares with central differences.
    fn composite(t: &mut Tape, x: &[f64]) -> Var {
        let a = t.param(0, Tensor::matrix(3, 4, x[..12].to_vec()).unwrap());
        let b = t.param(1, Tensor::matrix(4, 2, x[12..20].to_vec()).unwrap());
        let bias = t.param(2, Tensor::matrix(1, 2, x[20..22].to_vec()).unwrap());
        let ab = t.matmul(a, b).unwrap();
        let h = t.add_row(ab, bias).unwrap();
        let r = t.relu(h);
        let sm = t.softmax_rows(h);
        let nt = t.matmul_nt(sm, r).unwrap();
        let mx = t.col_max(nt);
        let sc = t.scale(mx, 0.7);
        let left = t.slice_cols(a, 1, 2).unwrap();
        let cat = t.concat_cols(&[left, sm]).unwrap();
        let rows = t.slice_rows(cat, 1, 2).unwrap();
        let sh = t.reshape(rows, 1, 8).unwrap();
        let sub = t.sub(sh, sh).unwrap();
        let add = t.add(sh, sub).unwrap();
        let tgt: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let pts = t.reshape(rows, 2, 4).unwrap();
        let p3 = t.slice_cols(pts, 0, 3).unwrap();
        let l1 = t.l1_point_mean(p3, tgt.clone()).unwrap();
        let l2 = t.l2_point_mean(p3, tgt).unwrap();
        let ld = t.l2_dist(add, vec![0.3; 8]).unwrap();
        let s1 = t.sum(sc);
        let acc1 = t.add(s1, l1).unwrap();
        let acc2 = t.add(acc1, l2).unwrap();
        t.add(acc2, ld).unwrap()
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let x: Vec<f64> = (0..22).map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.13).collect();
        let mut t = Tape::new();
        let loss = composite(&mut t, &x);
        let g = t.backward(loss).unwrap();
        let flat: Vec<f64> = g.by_param.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let num = numeric(
            |p| {
                let mut t = Tape::new();
                let l = composite(&mut t, p);
                t.value(l).item()
            },
            &x,
        );
        for (i, (a, n)) in flat.iter().zip(&num).enumerate() {
            assert!((a - n).abs() < 1e-6, "entry {i}: {a} vs {n}");
        }
    }

    #[test]
    fn empty_col_max_is_zero() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(0, 4));
        let m = t.col_max(a);
        assert_eq!(t.value(m).data, vec![0.0; 4]);
    }
}
