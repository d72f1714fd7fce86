use std::sync::Arc;

use super::{elu, gemm, leaky_relu, sigmoid, AutodiffError, Tensor};

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    Mean(Var),
    RowMean(Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    Powf(Var, f64),
    Ln(Var),
    Clamp(Var, f64, f64),
    GatherRows { input: Var, index: Arc<[usize]> },
    ScatterAddRows { input: Var, index: Arc<[usize]> },
    SegmentSoftmax { input: Var, segments: Arc<[usize]>, count: usize },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of the node's shape when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn check_2d(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(AutodiffError::shape(op, t.shape(), &[]));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite("leaf"));
        }
        if value.shape().len() != 2 {
            return Err(AutodiffError::Invalid(format!(
                "leaf tensors must be 2-D, got {:?}",
                value.shape()
            )));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let out = x.zip_map(y, |p, q| p + q);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let out = x.zip_map(y, |p, q| p - q);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let out = x.zip_map(y, |p, q| p * q);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    fn row_broadcast(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        check_2d(name, x)?;
        if y.shape() != [1, x.cols()] {
            return Err(AutodiffError::shape(name, x.shape(), y.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = f(*v, y.data()[i % c]);
        }
        Ok(out)
    }

    fn col_broadcast(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        check_2d(name, x)?;
        if y.shape() != [x.rows(), 1] {
            return Err(AutodiffError::shape(name, x.shape(), y.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = f(*v, y.data()[i / c]);
        }
        Ok(out)
    }

    /// `a (n x d) + b (1 x d)` broadcast over rows, e.g. a bias.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.row_broadcast("add_row", a, b, |p, q| p + q)?;
        Ok(self.push(out, Op::AddRow(a, b), &[a, b]))
    }

    /// `a (n x d) * b (1 x d)` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.row_broadcast("mul_row", a, b, |p, q| p * q)?;
        Ok(self.push(out, Op::MulRow(a, b), &[a, b]))
    }

    /// `a (n x d) + c (n x 1)` broadcast over columns.
    pub fn add_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let out = self.col_broadcast("add_col", a, c, |p, q| p + q)?;
        Ok(self.push(out, Op::AddCol(a, c), &[a, c]))
    }

    /// `a (n x d) * c (n x 1)` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let out = self.col_broadcast("mul_col", a, c, |p, q| p * q)?;
        Ok(self.push(out, Op::MulCol(a, c), &[a, c]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        check_2d("transpose", self.value(a))?;
        let out = self.value(a).transpose();
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| AutodiffError::Invalid("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis > 1 || base.len() != 2 {
            return Err(AutodiffError::shape("concat", &base, &[axis]));
        }
        let other = 1 - axis;
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            if s.len() != 2 || s[other] != base[other] {
                return Err(AutodiffError::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let out = if axis == 0 {
            let mut data = Vec::with_capacity(total * base[1]);
            for v in inputs {
                data.extend_from_slice(self.value(*v).data());
            }
            Tensor::matrix(total, base[1], data)
        } else {
            let rows = base[0];
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in inputs {
                    data.extend_from_slice(self.value(*v).row_slice(r));
                }
            }
            Tensor::matrix(rows, total, data)
        };
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Contiguous slice `[start, start + len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        check_2d("slice", x)?;
        if axis > 1 || start + len > x.shape()[axis] {
            return Err(AutodiffError::shape("slice", x.shape(), &[axis, start, len]));
        }
        let out = if axis == 0 {
            let c = x.cols();
            Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())
        } else {
            let mut data = Vec::with_capacity(x.rows() * len);
            for r in 0..x.rows() {
                data.extend_from_slice(&x.row_slice(r)[start..start + len]);
            }
            Tensor::matrix(x.rows(), len, data)
        };
        Ok(self.push(
            out,
            Op::Slice {
                input: a,
                axis,
                start,
            },
            &[a],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        Ok(self.push(out, Op::Sum(a), &[a]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(AutodiffError::Invalid("mean of empty tensor".into()));
        }
        let out = Tensor::scalar(x.sum() / x.len() as f64);
        Ok(self.push(out, Op::Mean(a), &[a]))
    }

    /// Mean over the column axis: `n x d -> n x 1`.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        check_2d("row_mean", x)?;
        let c = x.cols() as f64;
        let out = Tensor::column((0..x.rows()).map(|r| x.row_slice(r).iter().sum::<f64>() / c).collect());
        Ok(self.push(out, Op::RowMean(a), &[a]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        Ok(self.push(out, Op::Scale(a, c), &[a]))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + c);
        Ok(self.push(out, Op::AddScalar(a), &[a]))
    }

    /// LeakyReLU; the derivative at exactly zero takes the positive branch.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|v| leaky_relu(v, slope));
        Ok(self.push(out, Op::LeakyRelu(a, slope), &[a]))
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let out = self.value(a).map(|v| elu(v, alpha));
        Ok(self.push(out, Op::Elu(a, alpha), &[a]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        Ok(self.push(out, Op::Relu(a), &[a]))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        Ok(self.push(out, Op::Tanh(a), &[a]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        Ok(self.push(out, Op::Sigmoid(a), &[a]))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v * v);
        Ok(self.push(out, Op::Square(a), &[a]))
    }

    /// `a^p` elementwise; inputs must be strictly positive.
    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let x = self.value(a);
        if x.data().iter().any(|&v| v <= 0.0) {
            return Err(AutodiffError::Invalid("powf requires positive inputs".into()));
        }
        let out = x.map(|v| v.powf(p));
        Ok(self.push(out, Op::Powf(a, p), &[a]))
    }

    /// Natural logarithm; inputs must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.data().iter().any(|&v| v <= 0.0) {
            return Err(AutodiffError::Invalid("ln requires positive inputs".into()));
        }
        let out = x.map(f64::ln);
        Ok(self.push(out, Op::Ln(a), &[a]))
    }

    /// Clamp into `[lo, hi]`; gradient passes only where the input is inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        Ok(self.push(out, Op::Clamp(a, lo, hi), &[a]))
    }

    /// Row gather: output row `e` is input row `index[e]`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        check_2d("gather_rows", x)?;
        let (n, c) = (x.rows(), x.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= n {
                return Err(AutodiffError::IndexOutOfRange { index: i, len: n });
            }
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor::matrix(index.len(), c, data);
        Ok(self.push(
            out,
            Op::GatherRows {
                input: a,
                index: index.clone(),
            },
            &[a],
        ))
    }

    /// Row scatter-add: output row `index[e]` accumulates input row `e`.
    pub fn scatter_add_rows(&mut self, a: Var, index: &Arc<[usize]>, rows: usize) -> Result<Var> {
        let x = self.value(a);
        check_2d("scatter_add_rows", x)?;
        if x.rows() != index.len() {
            return Err(AutodiffError::shape("scatter_add_rows", x.shape(), &[index.len()]));
        }
        let c = x.cols();
        let mut out = Tensor::zeros(&[rows, c]);
        for (e, &i) in index.iter().enumerate() {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfRange { index: i, len: rows });
            }
            let dst = &mut out.data_mut()[i * c..(i + 1) * c];
            for (d, s) in dst.iter_mut().zip(x.row_slice(e)) {
                *d += s;
            }
        }
        Ok(self.push(
            out,
            Op::ScatterAddRows {
                input: a,
                index: index.clone(),
            },
            &[a],
        ))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    /// Every segment in `0..count` must own at least one row.
    pub fn segment_softmax(&mut self, a: Var, segments: &Arc<[usize]>, count: usize) -> Result<Var> {
        let x = self.value(a);
        check_2d("segment_softmax", x)?;
        if x.rows() != segments.len() {
            return Err(AutodiffError::shape("segment_softmax", x.shape(), &[segments.len()]));
        }
        let out = segment_softmax_values(x, segments, count)?;
        Ok(self.push(
            out,
            Op::SegmentSoftmax {
                input: a,
                segments: segments.clone(),
                count,
            },
            &[a],
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // Only report gradients for nodes that can carry them.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (x, z) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(z, |p, q| p * q));
                acc(*b, g.zip_map(x, |p, q| p * q));
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                acc(*b, column_sums(g));
            }
            Op::MulRow(a, b) => {
                let (x, r) = (self.value(*a), self.value(*b));
                let c = x.cols();
                let mut ga = g.clone();
                for (i, v) in ga.data_mut().iter_mut().enumerate() {
                    *v *= r.data()[i % c];
                }
                acc(*a, ga);
                acc(*b, column_sums(&g.zip_map(x, |p, q| p * q)));
            }
            Op::AddCol(a, c) => {
                acc(*a, g.clone());
                acc(*c, row_sums(g));
            }
            Op::MulCol(a, c) => {
                let (x, col) = (self.value(*a), self.value(*c));
                let k = x.cols();
                let mut ga = g.clone();
                for (i, v) in ga.data_mut().iter_mut().enumerate() {
                    *v *= col.data()[i / k];
                }
                acc(*a, ga);
                acc(*c, row_sums(&g.zip_map(x, |p, q| p * q)));
            }
            Op::MatMul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), w.cols());
                if self.nodes[a.0].requires_grad {
                    // dA = G (n x m) * B^T (m x k)
                    let mut ga = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), false, w.data(), true, &mut ga, 0.0);
                    acc(*a, Tensor::matrix(n, k, ga));
                }
                if self.nodes[b.0].requires_grad {
                    // dB = A^T (k x n) * G (n x m)
                    let mut gb = vec![0.0; k * m];
                    gemm(k, n, m, x.data(), true, g.data(), false, &mut gb, 0.0);
                    acc(*b, Tensor::matrix(k, m, gb));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Concat { inputs, axis } => {
                let mut offset = 0;
                for v in inputs {
                    let s = self.value(*v).shape();
                    let (r, c) = (s[0], s[1]);
                    let part = if *axis == 0 {
                        let gc = g.cols();
                        Tensor::matrix(r, c, g.data()[offset * gc..(offset + r) * gc].to_vec())
                    } else {
                        let mut data = Vec::with_capacity(r * c);
                        for row in 0..r {
                            data.extend_from_slice(&g.row_slice(row)[offset..offset + c]);
                        }
                        Tensor::matrix(r, c, data)
                    };
                    offset += s[*axis];
                    acc(*v, part);
                }
            }
            Op::Slice { input, axis, start } => {
                let x = self.value(*input);
                let mut ga = Tensor::zeros(x.shape());
                let c = x.cols();
                if *axis == 0 {
                    ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                } else {
                    let len = g.cols();
                    for r in 0..x.rows() {
                        ga.data_mut()[r * c + start..r * c + start + len]
                            .copy_from_slice(g.row_slice(r));
                    }
                }
                acc(*input, ga);
            }
            Op::Sum(a) => acc(*a, Tensor::full(self.shape(*a), g.item())),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                acc(*a, Tensor::full(self.shape(*a), g.item() / n));
            }
            Op::RowMean(a) => {
                let x = self.value(*a);
                let c = x.cols();
                let mut ga = Tensor::zeros(x.shape());
                for (i, v) in ga.data_mut().iter_mut().enumerate() {
                    *v = g.data()[i / c] / c as f64;
                }
                acc(*a, ga);
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| v * c)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| if q >= 0.0 { p } else { p * slope }));
            }
            Op::Elu(a, alpha) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| if q >= 0.0 { p } else { p * alpha * q.exp() }));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| if q >= 0.0 { p } else { 0.0 }));
            }
            Op::Tanh(a) => acc(*a, g.zip_map(y, |p, t| p * (1.0 - t * t))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(y, |p, s| p * s * (1.0 - s))),
            Op::Square(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| 2.0 * p * q));
            }
            Op::Powf(a, pw) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| p * pw * q.powf(pw - 1.0)));
            }
            Op::Ln(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |p, q| p / q));
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                acc(
                    *a,
                    g.zip_map(x, |p, q| if q >= *lo && q <= *hi { p } else { 0.0 }),
                );
            }
            Op::GatherRows { input, index } => {
                let x = self.value(*input);
                let c = x.cols();
                let mut ga = Tensor::zeros(x.shape());
                for (e, &i) in index.iter().enumerate() {
                    let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                    for (d, s) in dst.iter_mut().zip(g.row_slice(e)) {
                        *d += s;
                    }
                }
                acc(*input, ga);
            }
            Op::ScatterAddRows { input, index } => {
                let c = g.cols();
                let mut data = Vec::with_capacity(index.len() * c);
                for &i in index.iter() {
                    data.extend_from_slice(g.row_slice(i));
                }
                acc(*input, Tensor::matrix(index.len(), c, data));
            }
            Op::SegmentSoftmax {
                input,
                segments,
                count,
            } => {
                let c = y.cols();
                let mut dots = vec![0.0; count * c];
                for (e, &s) in segments.iter().enumerate() {
                    for k in 0..c {
                        dots[s * c + k] += g.get(e, k) * y.get(e, k);
                    }
                }
                let mut ga = Tensor::zeros(y.shape());
                for (e, &s) in segments.iter().enumerate() {
                    for k in 0..c {
                        ga.set(e, k, y.get(e, k) * (g.get(e, k) - dots[s * c + k]));
                    }
                }
                acc(*input, ga);
            }
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row_slice(r)) {
            *o += v;
        }
    }
    Tensor::row(out)
}

fn row_sums(g: &Tensor) -> Tensor {
    Tensor::column((0..g.rows()).map(|r| g.row_slice(r).iter().sum()).collect())
}

/// Forward segment softmax, stabilized by the per-segment maximum.
pub(crate) fn segment_softmax_values(
    x: &Tensor,
    segments: &[usize],
    count: usize,
) -> std::result::Result<Tensor, AutodiffError> {
    let c = x.cols();
    let mut max = vec![f64::NEG_INFINITY; count * c];
    let mut seen = vec![false; count];
    for (e, &s) in segments.iter().enumerate() {
        if s >= count {
            return Err(AutodiffError::IndexOutOfRange { index: s, len: count });
        }
        seen[s] = true;
        for k in 0..c {
            let m = &mut max[s * c + k];
            *m = m.max(x.get(e, k));
        }
    }
    if let Some(empty) = seen.iter().position(|s| !s) {
        return Err(AutodiffError::EmptySegment(empty));
    }
    let mut out = Tensor::zeros(x.shape());
    let mut denom = vec![0.0; count * c];
    for (e, &s) in segments.iter().enumerate() {
        for k in 0..c {
            let v = (x.get(e, k) - max[s * c + k]).exp();
            out.set(e, k, v);
            denom[s * c + k] += v;
        }
    }
    for (e, &s) in segments.iter().enumerate() {
        for k in 0..c {
            out.set(e, k, out.get(e, k) / denom[s * c + k]);
        }
    }
    Ok(out)
}
