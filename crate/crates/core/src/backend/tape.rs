//! Reverse-mode differentiation over a linear tape.
//!
//! Every differentiable operation returns a [`Var`] holding its value; when
//! the tape is recording and at least one operand depends on a parameter, a
//! node with the saved operands is appended. [`Tape::grad`] walks the nodes
//! in reverse and accumulates vector-Jacobian products into per-parameter
//! gradients.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::params::{Gradients, ParamStore};
use super::tensor::{gemm, Tensor};
use super::BackendError;

const LAYERNORM_EPS: f64 = 1e-5;

/// Storage precision applied to every operation result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    /// Values are rounded to the nearest `f32` after every operation.
    Single,
    #[default]
    Double,
}

impl Precision {
    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::Single),
            64 => Some(Precision::Double),
            _ => None,
        }
    }
}

type Id = usize;

enum Op {
    Param(String),
    MatMul { a: Option<Id>, b: Option<Id>, av: Rc<Tensor>, bv: Rc<Tensor> },
    Add { a: Option<Id>, b: Option<Id>, bias: bool },
    Sub { a: Option<Id>, b: Option<Id>, bias: bool },
    Mul { a: Option<Id>, b: Option<Id>, av: Rc<Tensor>, bv: Rc<Tensor>, bias: bool },
    MulScalarVar { a: Option<Id>, s: Option<Id>, av: Rc<Tensor>, sv: f64 },
    RowScale { a: Option<Id>, s: Option<Id>, av: Rc<Tensor>, sv: Rc<Tensor> },
    Scale { a: Id, factor: f64 },
    Recip { a: Id, y: Rc<Tensor> },
    Sin { a: Id, av: Rc<Tensor> },
    Cos { a: Id, av: Rc<Tensor> },
    Exp { a: Id, y: Rc<Tensor> },
    Softmax { a: Id, y: Rc<Tensor> },
    LayerNorm { a: Id, xhat: Tensor, inv_std: Vec<f64> },
    SumAll { a: Id, shape: Vec<usize> },
    MeanAll { a: Id, shape: Vec<usize> },
    ConcatCols { parts: Vec<(Option<Id>, usize)>, rows: usize },
    ConcatRows { parts: Vec<(Option<Id>, usize)>, cols: usize },
    SliceCols { a: Id, start: usize, in_cols: usize },
    SliceRows { a: Id, start: usize, in_shape: Vec<usize> },
    Transpose { a: Id },
    Reshape { a: Id, in_shape: Vec<usize> },
    GatherRows { a: Id, index: Vec<Option<usize>>, in_shape: Vec<usize> },
}

/// Operation recorder. Single-threaded; one tape per forward/backward pass.
pub struct Tape {
    nodes: RefCell<Vec<Op>>,
    recording: bool,
    precision: Precision,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A value produced on a [`Tape`], optionally connected to parameters.
#[derive(Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Option<Id>,
    value: Rc<Tensor>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.value.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: true, precision: Precision::Double }
    }

    /// A tape that never records: forward evaluation only.
    pub fn inference() -> Self {
        Self { recording: false, ..Self::new() }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, mut value: Tensor) -> Var<'_> {
        if self.precision == Precision::Single {
            value.round_to_f32();
        }
        Var { tape: self, id: None, value: Rc::new(value) }
    }

    /// Leaf bound to a named parameter. A parameter used several times in one
    /// pass gets one leaf per use; gradients are summed by name.
    pub fn param(&self, name: &str, value: &Tensor) -> Var<'_> {
        let mut value = value.clone();
        if self.precision == Precision::Single {
            value.round_to_f32();
        }
        let id = self.recording.then(|| self.push(Op::Param(name.to_string())));
        Var { tape: self, id, value: Rc::new(value) }
    }

    fn push(&self, op: Op) -> Id {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(op);
        nodes.len() - 1
    }

    fn emit(
        &self,
        op_name: &'static str,
        mut value: Tensor,
        tracked: bool,
        op: impl FnOnce() -> Op,
    ) -> Result<Var<'_>, BackendError> {
        if self.precision == Precision::Single {
            value.round_to_f32();
        }
        if !value.is_finite() {
            return Err(BackendError::NonFinite(op_name));
        }
        let id = (self.recording && tracked).then(|| self.push(op()));
        Ok(Var { tape: self, id, value: Rc::new(value) })
    }

    /// Gradient of a scalar `loss` with respect to every parameter in `params`.
    /// Parameters the loss does not depend on receive zero gradients.
    pub fn grad(&self, loss: &Var<'_>, params: &ParamStore) -> Result<Gradients, BackendError> {
        let mut grads = self.backward(loss)?;
        for (name, value) in params.iter() {
            grads.entry(name.to_string()).or_insert_with(|| Tensor::zeros(value.shape()));
        }
        Ok(Gradients::from_map(grads))
    }

    fn backward(&self, loss: &Var<'_>) -> Result<BTreeMap<String, Tensor>, BackendError> {
        if loss.value.numel() != 1 {
            return Err(BackendError::NotScalar(loss.value.shape().to_vec()));
        }
        let mut out = BTreeMap::new();
        let Some(root) = loss.id else {
            return Ok(out);
        };
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(root + 1);
        grads.resize_with(root + 1, || None);
        grads[root] = Some(Tensor::full(loss.value.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], id: Option<Id>, g: Tensor) {
            if let Some(id) = id {
                match &mut grads[id] {
                    Some(existing) => existing.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &nodes[id] {
                Op::Param(name) => match out.get_mut(name) {
                    Some(existing) => Tensor::add_assign(existing, &g),
                    None => {
                        out.insert(name.clone(), g);
                    }
                },
                Op::MatMul { a, b, av, bv } => {
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if a.is_some() {
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, bv.data(), true, &mut da);
                        acc(&mut grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                    }
                    if b.is_some() {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), true, g.data(), false, &mut db);
                        acc(&mut grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                    }
                }
                Op::Add { a, b, bias } => {
                    if b.is_some() {
                        let gb = if *bias { g.sum_rows() } else { g.clone() };
                        acc(&mut grads, *b, gb);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sub { a, b, bias } => {
                    if b.is_some() {
                        let gb = if *bias { g.sum_rows() } else { g.clone() };
                        acc(&mut grads, *b, gb.map(|v| -v));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Mul { a, b, av, bv, bias } => {
                    if a.is_some() {
                        let ga = if *bias { broadcast_rows(&g, bv, |x, y| x * y) } else { g.zip_map(bv, |x, y| x * y) };
                        acc(&mut grads, *a, ga);
                    }
                    if b.is_some() {
                        let prod = g.zip_map(av, |x, y| x * y);
                        acc(&mut grads, *b, if *bias { prod.sum_rows() } else { prod });
                    }
                }
                Op::MulScalarVar { a, s, av, sv } => {
                    if s.is_some() {
                        let ds: f64 = g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum();
                        acc(&mut grads, *s, Tensor::scalar(ds));
                    }
                    acc(&mut grads, *a, g.map(|v| v * sv));
                }
                Op::RowScale { a, s, av, sv } => {
                    let c = av.cols();
                    if s.is_some() {
                        let ds: Vec<f64> = g
                            .data()
                            .chunks(c)
                            .zip(av.data().chunks(c))
                            .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                            .collect();
                        acc(&mut grads, *s, Tensor::new(sv.shape().to_vec(), ds)?);
                    }
                    if a.is_some() {
                        let mut ga = g;
                        for (row, s) in ga.data_mut().chunks_mut(c).zip(sv.data()) {
                            row.iter_mut().for_each(|v| *v *= s);
                        }
                        acc(&mut grads, *a, ga);
                    }
                }
                Op::Scale { a, factor } => acc(&mut grads, Some(*a), g.map(|v| v * factor)),
                Op::Recip { a, y } => acc(&mut grads, Some(*a), g.zip_map(y, |gv, yv| -gv * yv * yv)),
                Op::Sin { a, av } => acc(&mut grads, Some(*a), g.zip_map(av, |gv, x| gv * x.cos())),
                Op::Cos { a, av } => acc(&mut grads, Some(*a), g.zip_map(av, |gv, x| -gv * x.sin())),
                Op::Exp { a, y } => acc(&mut grads, Some(*a), g.zip_map(y, |gv, yv| gv * yv)),
                Op::Softmax { a, y } => {
                    let c = y.cols();
                    let mut ga = g;
                    for (gr, yr) in ga.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for (gv, yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    acc(&mut grads, Some(*a), ga);
                }
                Op::LayerNorm { a, xhat, inv_std } => {
                    let c = xhat.cols();
                    let mut ga = g;
                    for ((gr, xr), is) in ga.data_mut().chunks_mut(c).zip(xhat.data().chunks(c)).zip(inv_std) {
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gx = gr.iter().zip(xr).map(|(x, y)| x * y).sum::<f64>() / c as f64;
                        for (gv, xv) in gr.iter_mut().zip(xr) {
                            *gv = is * (*gv - mean_g - xv * mean_gx);
                        }
                    }
                    acc(&mut grads, Some(*a), ga);
                }
                Op::SumAll { a, shape } => acc(&mut grads, Some(*a), Tensor::full(shape, g.data()[0])),
                Op::MeanAll { a, shape } => {
                    let n: usize = shape.iter().product();
                    acc(&mut grads, Some(*a), Tensor::full(shape, g.data()[0] / n as f64));
                }
                Op::ConcatCols { parts, rows } => {
                    let total: usize = parts.iter().map(|p| p.1).sum();
                    let mut offset = 0;
                    for (pid, width) in parts {
                        if pid.is_some() {
                            let mut data = Vec::with_capacity(rows * width);
                            for r in 0..*rows {
                                data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + width]);
                            }
                            acc(&mut grads, *pid, Tensor::matrix(*rows, *width, data)?);
                        }
                        offset += width;
                    }
                }
                Op::ConcatRows { parts, cols } => {
                    let mut offset = 0;
                    for (pid, rows) in parts {
                        if pid.is_some() {
                            let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                            acc(&mut grads, *pid, Tensor::matrix(*rows, *cols, data)?);
                        }
                        offset += rows;
                    }
                }
                Op::SliceCols { a, start, in_cols } => {
                    let (rows, width) = (g.rows(), g.cols());
                    let mut ga = Tensor::zeros(&[rows, *in_cols]);
                    for r in 0..rows {
                        ga.data_mut()[r * in_cols + start..r * in_cols + start + width].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, Some(*a), ga);
                }
                Op::SliceRows { a, start, in_shape } => {
                    let c = g.cols();
                    let mut ga = Tensor::zeros(in_shape);
                    ga.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                    acc(&mut grads, Some(*a), ga);
                }
                Op::Transpose { a } => acc(&mut grads, Some(*a), g.transpose2()),
                Op::Reshape { a, in_shape } => acc(&mut grads, Some(*a), g.reshaped(in_shape.clone())?),
                Op::GatherRows { a, index, in_shape } => {
                    let mut ga = Tensor::zeros(in_shape);
                    let c = ga.cols();
                    for (r, src) in index.iter().enumerate() {
                        if let Some(src) = src {
                            let dst = &mut ga.data_mut()[src * c..(src + 1) * c];
                            for (d, v) in dst.iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                    }
                    acc(&mut grads, Some(*a), ga);
                }
            }
        }
        Ok(out)
    }
}

fn broadcast_rows(a: &Tensor, bias: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let c = a.cols();
    let mut out = a.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v = f(*v, *b);
        }
    }
    out
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> BackendError {
    BackendError::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// True when gradients can flow from this value to some parameter.
    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    fn tracked_any(&self, other: &Var<'_>) -> bool {
        self.id.is_some() || other.id.is_some()
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value.data(), false, other.value.data(), false, &mut out);
        self.tape.emit("matmul", Tensor::matrix(m, n, out)?, self.tracked_any(other), || Op::MatMul {
            a: self.id,
            b: other.id,
            av: self.value.clone(),
            bv: other.value.clone(),
        })
    }

    /// Elementwise binary op with optional trailing-axis broadcast of `other`.
    fn binary_bias(&self, other: &Var<'t>, name: &str) -> Result<bool, BackendError> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa == sb {
            Ok(false)
        } else if sb.len() == 1 && sb[0] == self.value.cols() {
            Ok(true)
        } else {
            Err(shape_err(name, sa, sb))
        }
    }

    /// `self + other`; `other` may be a trailing-axis bias vector.
    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let bias = self.binary_bias(other, "add")?;
        let value = if bias {
            broadcast_rows(&self.value, &other.value, |x, y| x + y)
        } else {
            self.value.zip_map(&other.value, |x, y| x + y)
        };
        self.tape.emit("add", value, self.tracked_any(other), || Op::Add { a: self.id, b: other.id, bias })
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let bias = self.binary_bias(other, "sub")?;
        let value = if bias {
            broadcast_rows(&self.value, &other.value, |x, y| x - y)
        } else {
            self.value.zip_map(&other.value, |x, y| x - y)
        };
        self.tape.emit("sub", value, self.tracked_any(other), || Op::Sub { a: self.id, b: other.id, bias })
    }

    /// Elementwise product; `other` may be a trailing-axis gain vector.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let bias = self.binary_bias(other, "mul")?;
        let value = if bias {
            broadcast_rows(&self.value, &other.value, |x, y| x * y)
        } else {
            self.value.zip_map(&other.value, |x, y| x * y)
        };
        self.tape.emit("mul", value, self.tracked_any(other), || Op::Mul {
            a: self.id,
            b: other.id,
            av: self.value.clone(),
            bv: other.value.clone(),
            bias,
        })
    }

    /// Multiply every element by a one-element variable.
    pub fn mul_scalar(&self, s: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let sv = s.value.item()?;
        self.tape.emit("mul_scalar", self.value.map(|x| x * sv), self.tracked_any(s), || Op::MulScalarVar {
            a: self.id,
            s: s.id,
            av: self.value.clone(),
            sv,
        })
    }

    /// Scale row `i` of a matrix by `s[i]`; `s` has one entry per row.
    pub fn row_scale(&self, s: &Var<'t>) -> Result<Var<'t>, BackendError> {
        let rows = self.value.rows();
        if s.value.numel() != rows {
            return Err(shape_err("row_scale", self.shape(), s.shape()));
        }
        let c = self.value.cols();
        let mut value = (*self.value).clone();
        for (row, sv) in value.data_mut().chunks_mut(c).zip(s.value.data()) {
            row.iter_mut().for_each(|v| *v *= sv);
        }
        self.tape.emit("row_scale", value, self.tracked_any(s), || Op::RowScale {
            a: self.id,
            s: s.id,
            av: self.value.clone(),
            sv: s.value.clone(),
        })
    }

    pub fn scale(&self, factor: f64) -> Result<Var<'t>, BackendError> {
        let id = self.id;
        self.tape.emit("scale", self.value.map(|x| x * factor), id.is_some(), || Op::Scale { a: id.unwrap(), factor })
    }

    pub fn recip(&self) -> Result<Var<'t>, BackendError> {
        let y = Rc::new(self.value.map(|x| 1.0 / x));
        let id = self.id;
        self.tape.emit("recip", (*y).clone(), id.is_some(), || Op::Recip { a: id.unwrap(), y })
    }

    pub fn sin(&self) -> Result<Var<'t>, BackendError> {
        let id = self.id;
        self.tape.emit("sin", self.value.map(f64::sin), id.is_some(), || Op::Sin { a: id.unwrap(), av: self.value.clone() })
    }

    pub fn cos(&self) -> Result<Var<'t>, BackendError> {
        let id = self.id;
        self.tape.emit("cos", self.value.map(f64::cos), id.is_some(), || Op::Cos { a: id.unwrap(), av: self.value.clone() })
    }

    pub fn exp(&self) -> Result<Var<'t>, BackendError> {
        let y = Rc::new(self.value.map(f64::exp));
        let id = self.id;
        self.tape.emit("exp", (*y).clone(), id.is_some(), || Op::Exp { a: id.unwrap(), y })
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Var<'t>, BackendError> {
        let c = self.value.cols();
        let mut y = (*self.value).clone();
        for row in y.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let y = Rc::new(y);
        let id = self.id;
        self.tape.emit("softmax", (*y).clone(), id.is_some(), || Op::Softmax { a: id.unwrap(), y })
    }

    /// Normalize the last axis to zero mean and unit variance (no affine part).
    pub fn layernorm(&self) -> Result<Var<'t>, BackendError> {
        let c = self.value.cols();
        let mut xhat = (*self.value).clone();
        let mut inv_std = Vec::with_capacity(xhat.rows());
        for row in xhat.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let id = self.id;
        self.tape.emit("layernorm", xhat.clone(), id.is_some(), || Op::LayerNorm { a: id.unwrap(), xhat, inv_std })
    }

    pub fn sum(&self) -> Result<Var<'t>, BackendError> {
        let id = self.id;
        self.tape.emit("reduce_sum", Tensor::scalar(self.value.sum()), id.is_some(), || Op::SumAll {
            a: id.unwrap(),
            shape: self.shape().to_vec(),
        })
    }

    pub fn mean(&self) -> Result<Var<'t>, BackendError> {
        let n = self.value.numel().max(1) as f64;
        let id = self.id;
        self.tape.emit("reduce_mean", Tensor::scalar(self.value.sum() / n), id.is_some(), || Op::MeanAll {
            a: id.unwrap(),
            shape: self.shape().to_vec(),
        })
    }

    pub fn transpose(&self) -> Result<Var<'t>, BackendError> {
        if self.shape().len() != 2 {
            return Err(BackendError::Shape(format!("transpose needs a matrix, got {:?}", self.shape())));
        }
        let id = self.id;
        self.tape.emit("transpose", self.value.transpose2(), id.is_some(), || Op::Transpose { a: id.unwrap() })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>, BackendError> {
        let value = (*self.value).clone().reshaped(shape.to_vec())?;
        let id = self.id;
        self.tape.emit("reshape", value, id.is_some(), || Op::Reshape { a: id.unwrap(), in_shape: self.shape().to_vec() })
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>, BackendError> {
        let (rows, cols) = (self.value.rows(), self.value.cols());
        if self.shape().len() != 2 || start > end || end > cols {
            return Err(BackendError::Shape(format!("slice_cols {start}..{end} of {:?}", self.shape())));
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&self.value.row(r)[start..end]);
        }
        let id = self.id;
        self.tape.emit("slice_cols", Tensor::matrix(rows, end - start, data)?, id.is_some(), || Op::SliceCols {
            a: id.unwrap(),
            start,
            in_cols: cols,
        })
    }

    /// Rows `[start, end)` along the first axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var<'t>, BackendError> {
        let shape = self.shape();
        if shape.is_empty() || start > end || end > shape[0] {
            return Err(BackendError::Shape(format!("slice_rows {start}..{end} of {shape:?}")));
        }
        let inner: usize = shape[1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[0] = end - start;
        let data = self.value.data()[start * inner..end * inner].to_vec();
        let id = self.id;
        self.tape.emit("slice_rows", Tensor::new(out_shape, data)?, id.is_some(), || Op::SliceRows {
            a: id.unwrap(),
            start,
            in_shape: shape.to_vec(),
        })
    }

    /// Row `r` of the output is row `index[r]` of `self`, or zeros for `None`.
    pub fn gather_rows(&self, index: &[Option<usize>]) -> Result<Var<'t>, BackendError> {
        let (rows, cols) = (self.value.rows(), self.value.cols());
        let mut data = Vec::with_capacity(index.len() * cols);
        for src in index {
            match src {
                Some(s) if *s < rows => data.extend_from_slice(self.value.row(*s)),
                Some(s) => return Err(BackendError::Shape(format!("gather index {s} out of {rows} rows"))),
                None => data.extend(std::iter::repeat_n(0.0, cols)),
            }
        }
        let id = self.id;
        self.tape.emit("gather_rows", Tensor::matrix(index.len(), cols, data)?, id.is_some(), || Op::GatherRows {
            a: id.unwrap(),
            index: index.to_vec(),
            in_shape: vec![rows, cols],
        })
    }

    /// Concatenate matrices along the column axis.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>, BackendError> {
        let first = parts.first().ok_or_else(|| BackendError::Shape("concat of nothing".into()))?;
        let rows = first.value.rows();
        if parts.iter().any(|p| p.shape().len() != 2 || p.value.rows() != rows) {
            return Err(BackendError::Shape("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|p| p.value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.value.row(r));
            }
        }
        let tracked = parts.iter().any(|p| p.id.is_some());
        first.tape.emit("concat", Tensor::matrix(rows, total, data)?, tracked, || Op::ConcatCols {
            parts: parts.iter().map(|p| (p.id, p.value.cols())).collect(),
            rows,
        })
    }

    /// Concatenate matrices along the row axis.
    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>, BackendError> {
        let first = parts.first().ok_or_else(|| BackendError::Shape("concat of nothing".into()))?;
        let cols = first.value.cols();
        if parts.iter().any(|p| p.shape().len() != 2 || p.value.cols() != cols) {
            return Err(BackendError::Shape("concat_rows: column counts differ".into()));
        }
        let rows: usize = parts.iter().map(|p| p.value.rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(p.value.data());
        }
        let tracked = parts.iter().any(|p| p.id.is_some());
        first.tape.emit("concat", Tensor::matrix(rows, cols, data)?, tracked, || Op::ConcatRows {
            parts: parts.iter().map(|p| (p.id, p.value.rows())).collect(),
            cols,
        })
    }
}
