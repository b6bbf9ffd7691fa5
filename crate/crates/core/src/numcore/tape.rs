use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Lower clamp applied to every input of [`Tape::log`].
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
        dilation: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    MatMul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Abs(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MinScalar(Var, f64),
    SoftmaxRows(Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Var, Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    RowSum(Var),
    Sum(Var),
    Pick {
        x: Var,
        index: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only kept for leaves that require it.
    grad: Option<Vec<f64>>,
}

/// Elementwise operation kinds accepted by [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Relu,
    Sigmoid,
    Log,
    Abs,
    Add,
    Sub,
    Mul,
    MinScalar(f64),
}

/// Ordered record of differentiable operations.
///
/// Every node's inputs are recorded before it, so the backward pass walks
/// the node list in reverse.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape_or_scalar(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() || a.is_scalar() || b.is_scalar() {
        Ok(())
    } else {
        Err(dim_err!(
            "shapes {:?} and {:?} do not broadcast",
            a.shape(),
            b.shape()
        ))
    }
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (shape, n) = if a.len() >= b.len() {
        (a.shape().to_vec(), a.len())
    } else {
        (b.shape().to_vec(), b.len())
    };
    let (ad, bd) = (a.data(), b.data());
    let data = (0..n)
        .map(|i| {
            f(
                ad[if ad.len() == 1 { 0 } else { i }],
                bd[if bd.len() == 1 { 0 } else { i }],
            )
        })
        .collect();
    Tensor::new(&shape, data).expect("broadcast shape")
}

/// Adds `g` (full output size) into `dst`, summing when `dst` is a broadcast scalar.
fn accumulate(dst: &mut [f64], g: &[f64]) {
    if dst.len() == g.len() {
        for (d, v) in dst.iter_mut().zip(g) {
            *d += v;
        }
    } else {
        dst[0] += g.iter().sum::<f64>();
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {:?}", op);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf. Leaves that require grad receive `∂root/∂leaf` on backward.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| vec![0.0; value.len()]);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, `None` for non-leaves and constants.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    pub fn check_finite(&self, v: Var) -> Result<()> {
        if self.value(v).all_finite() {
            Ok(())
        } else {
            Err(Error::Numerical(alloc::format!(
                "non-finite value at tape node {}",
                v.0
            )))
        }
    }

    /// "Same" dilated convolution along time.
    ///
    /// `input` is `T × Cin`, `kernel` is `Cout × Cin × k` with odd `k`,
    /// `bias` has `Cout` entries. Reads outside `0..T` are zero.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var, dilation: usize) -> Result<Var> {
        if dilation < 1 {
            return Err(Error::Parameter("dilation must be at least 1".into()));
        }
        let (x, w, b) = (self.value(input), self.value(kernel), self.value(bias));
        if x.shape().len() != 2 || w.shape().len() != 3 {
            return Err(dim_err!("conv1d expects T×Cin input and Cout×Cin×k kernel"));
        }
        let (t_len, cin) = (x.rows(), x.cols());
        let (cout, kcin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if kcin != cin {
            return Err(dim_err!(
                "kernel expects {} input channels, input has {}",
                kcin,
                cin
            ));
        }
        if k % 2 == 0 {
            return Err(Error::Parameter(alloc::format!(
                "kernel size {} is not odd",
                k
            )));
        }
        if b.shape() != [cout] {
            return Err(dim_err!("bias shape {:?}, expected [{}]", b.shape(), cout));
        }
        let out =
            kernels::conv1d_forward(x.data(), t_len, cin, w.data(), b.data(), cout, k, dilation);
        let rg = self.needs(&[input, kernel, bias]);
        Ok(self.push(
            Tensor::new(&[t_len, cout], out)?,
            Op::Conv1d {
                input,
                kernel,
                bias,
                dilation,
            },
            rg,
        ))
    }

    /// Per-row affine map `x Wᵀ + b` (a 1×1 temporal convolution).
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        if x.shape().len() != 2 || w.shape().len() != 2 || w.cols() != x.cols() {
            return Err(dim_err!(
                "linear: input {:?} vs weight {:?}",
                x.shape(),
                w.shape()
            ));
        }
        if b.shape() != [w.rows()] {
            return Err(dim_err!(
                "linear: bias {:?} vs {} outputs",
                b.shape(),
                w.rows()
            ));
        }
        let (t_len, n_in, n_out) = (x.rows(), x.cols(), w.rows());
        let out = kernels::linear_forward(x.data(), t_len, n_in, w.data(), b.data(), n_out);
        let rg = self.needs(&[input, weight, bias]);
        Ok(self.push(
            Tensor::new(&[t_len, n_out], out)?,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(dim_err!("matmul {:?} · {:?}", av.shape(), bv.shape()));
        }
        let (n, m, p) = (av.rows(), av.cols(), bv.cols());
        let out = kernels::matmul(av.data(), bv.data(), n, m, p);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(&[n, p], out)?, Op::MatMul(a, b), rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| f(e)).collect();
        let t = Tensor::new(v.shape(), data).expect("unary shape");
        let rg = self.needs(&[x]);
        self.push(t, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), kernels::sigmoid)
    }

    /// Natural log of `max(x, LOG_CLAMP)`.
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), |v| libm::log(v.max(LOG_CLAMP)))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), libm::fabs)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    /// `min(x, c)`; the gradient is zero wherever `x >= c`.
    pub fn min_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::MinScalar(x, c), |v| v.min(c))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape_or_scalar(av, bv)?;
        let t = broadcast_binary(av, bv, f);
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Dispatches one of the pointwise operations by kind.
    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::Usage(alloc::format!(
                "{:?} takes {} operand(s), got {}",
                kind,
                arity,
                operands.len()
            )));
        }
        let x = operands[0];
        Ok(match kind {
            Elementwise::Relu => self.relu(x),
            Elementwise::Sigmoid => self.sigmoid(x),
            Elementwise::Log => self.log(x),
            Elementwise::Abs => self.abs(x),
            Elementwise::MinScalar(c) => self.min_scalar(x, c),
            Elementwise::Add => self.add(x, operands[1])?,
            Elementwise::Sub => self.sub(x, operands[1])?,
            Elementwise::Mul => self.mul(x, operands[1])?,
        })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 2 {
            return Err(dim_err!("softmax_rows on shape {:?}", v.shape()));
        }
        let out = kernels::softmax_rows(v.data(), v.cols());
        let t = Tensor::new(v.shape(), out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::SoftmaxRows(x), rg))
    }

    /// Rows `start..end` of a 2-D value.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x).slice_rows(start, end)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::SliceRows { x, start }, rg))
    }

    /// Columns `start..end` of a 2-D value.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x).slice_cols(start, end)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).concat_cols(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::ConcatCols(a, b), rg))
    }

    /// Sums each row of a `T × C` value into a length-`T` vector.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 2 {
            return Err(dim_err!("row_sum on shape {:?}", v.shape()));
        }
        let data = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::vector(data), Op::RowSum(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// `out[t] = x[t, index[t]]` for a `T × C` value.
    pub fn pick(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 2 || v.rows() != index.len() {
            return Err(dim_err!(
                "pick: {:?} with {} indices",
                v.shape(),
                index.len()
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= v.cols()) {
            return Err(dim_err!("pick: index {} out of {} columns", bad, v.cols()));
        }
        let data = index
            .iter()
            .enumerate()
            .map(|(t, &c)| v.get2(t, c))
            .collect();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Tensor::vector(data),
            Op::Pick {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `root`.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Usage(alloc::format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {
                    if let Some(acc) = self.nodes[i].grad.as_mut() {
                        for (a, v) in acc.iter_mut().zip(&g) {
                            *a += v;
                        }
                    }
                }
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                    dilation,
                } => {
                    let x = &self.nodes[input.0].value;
                    let w = &self.nodes[kernel.0].value;
                    let (t_len, cin) = (x.rows(), x.cols());
                    let (cout, k) = (w.shape()[0], w.shape()[2]);
                    let mut gi = self.grad_buf(input);
                    let mut gk = self.grad_buf(kernel);
                    let mut gb = self.grad_buf(bias);
                    kernels::conv1d_backward(
                        &g,
                        x.data(),
                        t_len,
                        cin,
                        w.data(),
                        cout,
                        k,
                        dilation,
                        gi.as_deref_mut(),
                        gk.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    merge(&mut grads, input, gi);
                    merge(&mut grads, kernel, gk);
                    merge(&mut grads, bias, gb);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &self.nodes[input.0].value;
                    let w = &self.nodes[weight.0].value;
                    let (t_len, n_in, n_out) = (x.rows(), x.cols(), w.rows());
                    let mut gi = self.grad_buf(input);
                    let mut gw = self.grad_buf(weight);
                    let mut gb = self.grad_buf(bias);
                    kernels::linear_backward(
                        &g,
                        x.data(),
                        t_len,
                        n_in,
                        w.data(),
                        n_out,
                        gi.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    merge(&mut grads, input, gi);
                    merge(&mut grads, weight, gw);
                    merge(&mut grads, bias, gb);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (nr, m, p) = (av.rows(), av.cols(), bv.cols());
                    if let Some(mut ga) = self.grad_buf(a) {
                        // dA = G · Bᵀ
                        for i2 in 0..nr {
                            for kk in 0..m {
                                let brow = &bv.data()[kk * p..(kk + 1) * p];
                                let grow = &g[i2 * p..(i2 + 1) * p];
                                ga[i2 * m + kk] +=
                                    brow.iter().zip(grow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                        merge(&mut grads, a, Some(ga));
                    }
                    if let Some(mut gb) = self.grad_buf(b) {
                        // dB = Aᵀ · G
                        for i2 in 0..nr {
                            let grow = &g[i2 * p..(i2 + 1) * p];
                            for kk in 0..m {
                                let av2 = av.data()[i2 * m + kk];
                                for (d, &gv) in gb[kk * p..(kk + 1) * p].iter_mut().zip(grow) {
                                    *d += av2 * gv;
                                }
                            }
                        }
                        merge(&mut grads, b, Some(gb));
                    }
                }
                Op::Relu(x) => {
                    let xv = self.nodes[x.0].value.data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Sigmoid(x) => {
                    let y = self.nodes[i].value.data();
                    let d = g
                        .iter()
                        .zip(y)
                        .map(|(&gv, &s)| gv * s * (1.0 - s))
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Log(x) => {
                    let xv = self.nodes[x.0].value.data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| if v > LOG_CLAMP { gv / v } else { 0.0 })
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Abs(x) => {
                    let xv = self.nodes[x.0].value.data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| {
                            if v > 0.0 {
                                gv
                            } else if v < 0.0 {
                                -gv
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Scale(x, c) => {
                    let d = g.iter().map(|&gv| gv * c).collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::AddScalar(x) => merge(&mut grads, x, Some(g)),
                Op::MinScalar(x, c) => {
                    let xv = self.nodes[x.0].value.data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| if v < c { gv } else { 0.0 })
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(self.nodes[i].op, Op::Sub(..)) {
                        -1.0
                    } else {
                        1.0
                    };
                    if let Some(mut ga) = self.grad_buf(a) {
                        accumulate(&mut ga, &g);
                        merge(&mut grads, a, Some(ga));
                    }
                    if let Some(mut gb) = self.grad_buf(b) {
                        let neg: Vec<f64> = g.iter().map(|v| v * sign).collect();
                        accumulate(&mut gb, &neg);
                        merge(&mut grads, b, Some(gb));
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    let at = |k: usize, d: &[f64]| d[if d.len() == 1 { 0 } else { k }];
                    if let Some(mut ga) = self.grad_buf(a) {
                        let full: Vec<f64> = g
                            .iter()
                            .enumerate()
                            .map(|(k, &gv)| gv * at(k, bv))
                            .collect();
                        accumulate(&mut ga, &full);
                        merge(&mut grads, a, Some(ga));
                    }
                    if let Some(mut gb) = self.grad_buf(b) {
                        let full: Vec<f64> = g
                            .iter()
                            .enumerate()
                            .map(|(k, &gv)| gv * at(k, av))
                            .collect();
                        accumulate(&mut gb, &full);
                        merge(&mut grads, b, Some(gb));
                    }
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[i].value;
                    let c = y.cols();
                    let mut d = vec![0.0; g.len()];
                    for ((yr, gr), dr) in y
                        .data()
                        .chunks_exact(c)
                        .zip(g.chunks_exact(c))
                        .zip(d.chunks_exact_mut(c))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((dv, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *dv = yv * (gv - dot);
                        }
                    }
                    merge(&mut grads, x, Some(d));
                }
                Op::SliceRows { x, start } => {
                    if let Some(mut gx) = self.grad_buf(x) {
                        let c = self.nodes[x.0].value.cols();
                        for (d, v) in gx[start * c..start * c + g.len()].iter_mut().zip(&g) {
                            *d += v;
                        }
                        merge(&mut grads, x, Some(gx));
                    }
                }
                Op::SliceCols { x, start } => {
                    if let Some(mut gx) = self.grad_buf(x) {
                        let c = self.nodes[x.0].value.cols();
                        let w = self.nodes[i].value.cols();
                        for (r, gr) in g.chunks_exact(w).enumerate() {
                            for (d, v) in gx[r * c + start..r * c + start + w].iter_mut().zip(gr) {
                                *d += v;
                            }
                        }
                        merge(&mut grads, x, Some(gx));
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.cols();
                    let cb = self.nodes[b.0].value.cols();
                    let rows = g.len() / (ca + cb);
                    if let Some(mut ga) = self.grad_buf(a) {
                        for r in 0..rows {
                            for (d, v) in ga[r * ca..(r + 1) * ca]
                                .iter_mut()
                                .zip(&g[r * (ca + cb)..r * (ca + cb) + ca])
                            {
                                *d += v;
                            }
                        }
                        merge(&mut grads, a, Some(ga));
                    }
                    if let Some(mut gb) = self.grad_buf(b) {
                        for r in 0..rows {
                            let src = &g[r * (ca + cb) + ca..(r + 1) * (ca + cb)];
                            for (d, v) in gb[r * cb..(r + 1) * cb].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                        merge(&mut grads, b, Some(gb));
                    }
                }
                Op::RowSum(x) => {
                    let c = self.nodes[x.0].value.cols();
                    let d = g
                        .iter()
                        .flat_map(|&gv| core::iter::repeat(gv).take(c))
                        .collect();
                    merge(&mut grads, x, Some(d));
                }
                Op::Sum(x) => {
                    let d = vec![g[0]; self.nodes[x.0].value.len()];
                    merge(&mut grads, x, Some(d));
                }
                Op::Pick { x, index } => {
                    if let Some(mut gx) = self.grad_buf(x) {
                        let c = self.nodes[x.0].value.cols();
                        for (t, (&ci, &gv)) in index.iter().zip(&g).enumerate() {
                            gx[t * c + ci] += gv;
                        }
                        merge(&mut grads, x, Some(gx));
                    }
                }
            }
        }
        Ok(())
    }

    fn grad_buf(&self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0]
            .requires_grad
            .then(|| vec![0.0; self.nodes[v.0].value.len()])
    }
}

fn merge(grads: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
    let Some(g) = g else { return };
    match grads[v.0].as_mut() {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&g) {
                *e += x;
            }
        }
        None => grads[v.0] = Some(g),
    }
}
