//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is a tape of executed primitives. Every primitive appends a
//! node holding its value; nodes that depend on a trainable leaf also keep
//! the operation needed to replay adjoints. Inputs always precede outputs,
//! so [`Graph::backward`] is a single reverse sweep.

use super::tensor::{gemm, logsumexp_slice, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// rhs is either the same shape or a single row broadcast over lhs rows.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    LogSoftmax(Var),
    LogSumExp {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    Row {
        x: Var,
        row: usize,
    },
    StackRows(Vec<Var>),
    Concat(Vec<Var>),
    Reshape(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    /// Empty until the first adjoint arrives.
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated adjoint of a leaf; zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let mut t = Tensor::zeros(node.value.shape());
        if !node.grad.is_empty() {
            t.data_mut().copy_from_slice(&node.grad);
        }
        t
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.clear();
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: Vec::new(),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::MatMul(a, b)))
    }

    fn broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<bool> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(false);
        }
        let ta = self.value(a);
        let tb = self.value(b);
        if sb.len() == 2 && sb[0] == 1 && ta.cols() == tb.cols() && sa.len() == 2 {
            return Ok(true);
        }
        Err(Error::Dimension {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    fn zip_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b).data();
        let n = tb.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb[i % n]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("add", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_check("sub", a, b)?;
        let out = self.zip_broadcast(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Sub(a, b)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = self.zip_broadcast(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// `factor · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, factor: f64, shift: f64) -> Var {
        self.map(x, |v| factor * v + shift, Op::Scale(x, factor))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(out, rg, op)
    }

    /// Log-softmax over the last axis, stabilized by max subtraction.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = t.cols();
        let mut data = vec![0.0; t.len()];
        for (src, dst) in t.data().chunks(v).zip(data.chunks_mut(v)) {
            super::tensor::log_softmax_slice(src, dst);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(out, rg, Op::LogSoftmax(x))
    }

    /// `log Σ exp` reduction over `axis`; the axis is removed from the shape
    /// (a full reduction yields shape `[1]`).
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::arg(format!(
                "logsumexp axis {axis} out of range for shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut buf = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                for (l, b) in buf.iter_mut().enumerate() {
                    *b = src[(o * len + l) * inner + i];
                }
                out[o * inner + i] = logsumexp_slice(&buf);
            }
        }
        let mut out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|&(d, _)| d != axis)
            .map(|(_, &e)| e)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            rg,
            Op::LogSumExp {
                x,
                outer,
                len,
                inner,
            },
        ))
    }

    /// `out[n] = x[n, idx[n]]` for a matrix `x`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if t.rank() != 2 || rows != idx.len() {
            return Err(Error::Dimension {
                op: "gather",
                lhs: t.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        if let Some(pos) = idx.iter().position(|&i| i >= cols) {
            return Err(Error::arg(format!(
                "gather index {} at position {pos} out of range [0, {cols})",
                idx[pos]
            )));
        }
        let data = idx.iter().enumerate().map(|(n, &i)| t.at(n, i)).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![idx.len()], data)?,
            rg,
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
        ))
    }

    /// Row `row` of a matrix as a `1 × n` tensor.
    pub fn row(&mut self, x: Var, row: usize) -> Result<Var> {
        let t = self.value(x);
        if row >= t.rows() {
            return Err(Error::arg(format!(
                "row {row} out of range for shape {:?}",
                t.shape()
            )));
        }
        let data = t.row_slice(row).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::row(data), rg, Op::Row { x, row }))
    }

    /// Stacks single-row tensors of equal width into a matrix.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::arg("stack_rows of nothing"))?;
        let n = self.value(first).len();
        let mut data = Vec::with_capacity(n * xs.len());
        for &x in xs {
            let t = self.value(x);
            if t.len() != n {
                return Err(Error::Dimension {
                    op: "stack_rows",
                    lhs: self.shape(first).to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let rg = self.rg(xs);
        Ok(self.push(
            Tensor::new(vec![xs.len(), n], data)?,
            rg,
            Op::StackRows(xs.to_vec()),
        ))
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::arg("concat of nothing"))?;
        let rows = self.value(first).rows();
        let mut total = 0;
        for &x in xs {
            let t = self.value(x);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row_slice(r));
            }
        }
        let rg = self.rg(xs);
        Ok(self.push(
            Tensor::new(vec![rows, total], data)?,
            rg,
            Op::Concat(xs.to_vec()),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, rg, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    /// `x · w + b` with `b` a single row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    fn grad_mut(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        if node.grad.is_empty() {
            node.grad = vec![0.0; node.value.len()];
        }
        Some(&mut node.grad)
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        if let Some(g) = self.grad_mut(v) {
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
    }

    /// Propagates `∂root/∂·` to every node that requires a gradient. Leaf
    /// adjoints accumulate across calls; intermediate adjoints are released.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.accumulate(root, &[1.0]);
        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || self.nodes[i].grad.is_empty() {
                continue;
            }
            let dy = std::mem::take(&mut self.nodes[i].grad);
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &dy);
            self.nodes[i].op = op;
        }
        Ok(())
    }

    fn propagate(&mut self, out: usize, op: &Op, dy: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = self.value(*b).cols();
                if self.requires_grad(*a) {
                    // dA = dY · Bᵀ
                    let bv = self.value(*b).data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let dyi = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let bp = &bv[p * n..(p + 1) * n];
                            da[i * k + p] = dyi.iter().zip(bp).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.accumulate(*a, &da);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dY
                    let av = self.value(*a).data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let dyi = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (d, &g) in db[p * n..(p + 1) * n].iter_mut().zip(dyi) {
                                *d += aip * g;
                            }
                        }
                    }
                    self.accumulate(*b, &db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(*a, dy);
                if let Some(gb) = self.grad_mut(*b) {
                    let n = gb.len();
                    for (i, &d) in dy.iter().enumerate() {
                        gb[i % n] += sign * d;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    let d: Vec<f64> = dy
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(g, y)| g * y)
                        .collect();
                    self.accumulate(*a, &d);
                }
                if self.requires_grad(*b) {
                    let d: Vec<f64> = dy
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, x)| g * x)
                        .collect();
                    self.accumulate(*b, &d);
                }
            }
            Op::Scale(x, f) => {
                let d: Vec<f64> = dy.iter().map(|g| g * f).collect();
                self.accumulate(*x, &d);
            }
            Op::Tanh(x) => {
                let d = self.elementwise_out(out, dy, |y| 1.0 - y * y);
                self.accumulate(*x, &d);
            }
            Op::Sigmoid(x) => {
                let d = self.elementwise_out(out, dy, |y| y * (1.0 - y));
                self.accumulate(*x, &d);
            }
            Op::Exp(x) => {
                let d = self.elementwise_out(out, dy, |y| y);
                self.accumulate(*x, &d);
            }
            Op::LogSoftmax(x) => {
                let y = self.nodes[out].value.data();
                let v = self.nodes[out].value.cols();
                let mut d = vec![0.0; y.len()];
                for ((ys, gs), ds) in y.chunks(v).zip(dy.chunks(v)).zip(d.chunks_mut(v)) {
                    let total: f64 = gs.iter().sum();
                    for ((di, &yi), &gi) in ds.iter_mut().zip(ys).zip(gs) {
                        *di = gi - yi.exp() * total;
                    }
                }
                self.accumulate(*x, &d);
            }
            Op::LogSumExp {
                x,
                outer,
                len,
                inner,
            } => {
                let xs = self.value(*x).data();
                let ys = self.nodes[out].value.data();
                let mut d = vec![0.0; xs.len()];
                for o in 0..*outer {
                    for i in 0..*inner {
                        let r = o * inner + i;
                        for l in 0..*len {
                            let at = (o * len + l) * inner + i;
                            d[at] = dy[r] * (xs[at] - ys[r]).exp();
                        }
                    }
                }
                self.accumulate(*x, &d);
            }
            Op::Gather { x, idx } => {
                let cols = self.value(*x).cols();
                if let Some(gx) = self.grad_mut(*x) {
                    for (n, &i) in idx.iter().enumerate() {
                        gx[n * cols + i] += dy[n];
                    }
                }
            }
            Op::Row { x, row } => {
                let cols = self.value(*x).cols();
                if let Some(gx) = self.grad_mut(*x) {
                    for (g, d) in gx[row * cols..(row + 1) * cols].iter_mut().zip(dy) {
                        *g += d;
                    }
                }
            }
            Op::StackRows(xs) => {
                let n = dy.len() / xs.len();
                for (r, &x) in xs.iter().enumerate() {
                    self.accumulate(x, &dy[r * n..(r + 1) * n]);
                }
            }
            Op::Concat(xs) => {
                let rows = self.nodes[out].value.rows();
                let total = self.nodes[out].value.cols();
                let mut offset = 0;
                for &x in xs {
                    let c = self.value(x).cols();
                    if self.requires_grad(x) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&dy[r * total + offset..r * total + offset + c]);
                        }
                        self.accumulate(x, &d);
                    }
                    offset += c;
                }
            }
            Op::Reshape(x) => self.accumulate(*x, dy),
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(*x, &vec![dy[0]; n]);
            }
        }
    }

    fn elementwise_out(&self, out: usize, dy: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes[out]
            .value
            .data()
            .iter()
            .zip(dy)
            .map(|(&y, g)| g * f(y))
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let id = g.constant(mat(&[vec![1., 0.], vec![0., 1.]]));
        let m = g.constant(mat(&[vec![1., 2.], vec![3., 4.]]));
        let p = g.matmul(id, m).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 4.]);

        let a = g.constant(mat(&[vec![1., 0.]]));
        let b = g.constant(mat(&[vec![0.], vec![5.]]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).data(), &[0.]);

        let a = g.constant(mat(&[vec![1., 2.], vec![3., 4.]]));
        let b = g.constant(mat(&[vec![5., 6.], vec![7., 8.]]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn log_softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![0., 0.]));
        let y = g.log_softmax(x);
        for v in g.value(y).data() {
            assert!((v + 2f64.ln()).abs() < 1e-15);
        }
        let x = g.constant(Tensor::row(vec![7.5]));
        let y = g.log_softmax(x);
        assert_eq!(g.value(y).data(), &[0.0]);

        let x = g.constant(Tensor::row(vec![1000., 1000. + 3f64.ln()]));
        let y = g.log_softmax(x);
        let d = g.value(y).data();
        assert!((d[0] + 4f64.ln()).abs() < 1e-12);
        assert!((d[1] - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_examples_and_empty_axis() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1], vec![-3.25]).unwrap());
        let y = g.logsumexp(x, 0).unwrap();
        assert_eq!(g.scalar(y), -3.25);
        let x = g.constant(Tensor::new(vec![2], vec![0., 0.]).unwrap());
        let y = g.logsumexp(x, 0).unwrap();
        assert!((g.scalar(y) - 0.693147).abs() < 1e-6);
        let x = g.constant(Tensor::new(vec![2], vec![-1000., -1001.]).unwrap());
        let y = g.logsumexp(x, 0).unwrap();
        assert!((g.scalar(y) + 999.686738).abs() < 1e-6);
        assert!(g.logsumexp(x, 1).is_err());
    }

    #[test]
    fn logsumexp_over_rows_and_columns() {
        let mut g = Graph::new();
        let x = g.constant(mat(&[vec![0., 0., 0.], vec![1., 2., 3.]]));
        let cols = g.logsumexp(x, 0).unwrap();
        assert_eq!(g.value(cols).shape(), &[3]);
        let rows = g.logsumexp(x, 1).unwrap();
        assert_eq!(g.value(rows).shape(), &[2]);
        assert!((g.value(rows).data()[0] - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gather_examples_and_range_error() {
        let mut g = Graph::new();
        let x = g.constant(mat(&[vec![1., 2.], vec![3., 4.]]));
        let y = g.gather(x, &[1, 0]).unwrap();
        assert_eq!(g.value(y).data(), &[2., 3.]);
        let err = g.gather(x, &[0, 2]).unwrap_err().to_string();
        assert!(err.contains("position 1"), "{err}");

        let u = g.constant(Tensor::filled(&[3, 4], -(4f64.ln())));
        let y = g.gather(u, &[3, 0, 2]).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == -(4f64.ln())));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::row(vec![1., -2., 3.]), true);
        let s = g.sum(w);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).data(), &[1., 1., 1.]);

        let mut g = Graph::new();
        let w = g.leaf(Tensor::scalar(3.0), true);
        let sq = g.mul(w, w).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(w).data(), &[6.0]);

        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![2], vec![0., 0.]).unwrap(), true);
        let l = g.logsumexp(w, 0).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(w).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shared_leaf_accumulates_both_paths() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::scalar(1.7), true);
        let y = g.add(w, w).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(w).data(), &[2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::row(vec![1., 2.]), true);
        assert!(matches!(g.backward(w), Err(Error::Argument(_))));
    }

    #[test]
    fn broadcast_row_add_reduces_bias_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(mat(&[vec![1., 2.], vec![3., 4.], vec![5., 6.]]), true);
        let b = g.leaf(Tensor::row(vec![0.5, -0.5]), true);
        let y = g.add(x, b).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).data(), &[3.0, 3.0]);
        assert_eq!(g.grad(x).data(), &[1.0; 6]);
    }
}
