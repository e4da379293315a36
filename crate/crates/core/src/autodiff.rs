//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in execution order, which is already a
//! topological order of the computation graph. [`Tape::backward`] walks it
//! once in reverse and returns the adjoint of every recorded node.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Handle to a node on a [`Tape`].
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
    MatMul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Mean(Var),
    Sum(Var),
    /// `constant + Σ coeff_i · x_i`; only the coefficients matter for backward.
    Affine(Vec<(Var, f64)>),
    Power(Var, f64),
    /// Per-row p-norm, producing a column.
    RowNorm(Var, f64),
    /// `x[r][c] · scale[c] + shift[c]`.
    ColumnAffine(Var, Vec<f64>),
    SliceRows(Var, usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
}

/// Recorded computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&DenseMatrix> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    /// Adjoint of `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> DenseMatrix {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &DenseMatrix {
        &self.nodes[var.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.value(var).get(0, 0)
    }

    fn check(&self, var: Var) -> Result<&DenseMatrix> {
        self.nodes
            .get(var.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::Tape(format!("node {} is not on this tape", var.0)))
    }

    fn push(&mut self, op: Op, value: DenseMatrix, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::non_finite("autodiff", format!("forward value of {name}")));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input (parameter, data batch or latent code).
    pub fn leaf(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(Op::Leaf, value, "leaf")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.check(a)?.matmul(self.check(b)?)?;
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    /// Adds a `1 × cols` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.check(x)?, self.check(bias)?);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {:?}", bv.shape(), xv.shape()),
            ));
        }
        let cols = xv.cols();
        let mut out = xv.clone();
        let b = bv.as_slice();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v += b[i % cols];
        }
        self.push(Op::AddBias(x, bias), out, "add_bias")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.map(sigmoid);
        self.push(Op::Sigmoid(x), v, "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.map(f64::tanh);
        self.push(Op::Tanh(x), v, "tanh")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let v = self.check(x)?.map(|u| if u > 0.0 { u } else { slope * u });
        self.push(Op::LeakyRelu(x, slope), v, "leaky_relu")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.map(f64::exp);
        self.push(Op::Exp(x), v, "exp")
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.check(x)?;
        if let Some(bad) = xv.as_slice().iter().find(|&&u| u <= 0.0) {
            return Err(Error::domain("autodiff", format!("log of non-positive value {bad}")));
        }
        let v = xv.map(f64::ln);
        self.push(Op::Log(x), v, "log")
    }

    /// Mean of all entries, as a 1×1 node.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.check(x)?;
        if xv.is_empty() {
            return Err(Error::shape("mean", "mean of an empty matrix"));
        }
        let v = DenseMatrix::scalar(xv.mean());
        self.push(Op::Mean(x), v, "mean")
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = DenseMatrix::scalar(self.check(x)?.sum());
        self.push(Op::Sum(x), v, "sum")
    }

    /// `constant + Σ coeff · x` over inputs of identical shape.
    pub fn affine(&mut self, terms: &[(Var, f64)], constant: f64) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Tape("affine combination needs at least one input".into()));
        };
        let shape = self.check(first)?.shape();
        let mut out = DenseMatrix::filled(shape.0, shape.1, constant);
        for &(v, c) in terms {
            let xv = self.check(v)?;
            if xv.shape() != shape {
                return Err(Error::shape(
                    "affine",
                    format!("{:?} combined with {:?}", xv.shape(), shape),
                ));
            }
            for (o, &u) in out.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                *o += c * u;
            }
        }
        self.push(Op::Affine(terms.to_vec()), out, "affine")
    }

    /// `a·x + b`, elementwise.
    pub fn scale_shift(&mut self, x: Var, a: f64, b: f64) -> Result<Var> {
        self.affine(&[(x, a)], b)
    }

    /// `x − y`, elementwise.
    pub fn sub(&mut self, x: Var, y: Var) -> Result<Var> {
        self.affine(&[(x, 1.0), (y, -1.0)], 0.0)
    }

    /// Elementwise power. Non-integer exponents need non-negative inputs.
    pub fn power(&mut self, x: Var, exponent: f64) -> Result<Var> {
        let xv = self.check(x)?;
        if exponent.fract() != 0.0 && xv.as_slice().iter().any(|&u| u < 0.0) {
            return Err(Error::domain(
                "autodiff",
                format!("negative base with fractional exponent {exponent}"),
            ));
        }
        let v = xv.map(|u| u.powf(exponent));
        self.push(Op::Power(x, exponent), v, "power")
    }

    /// p-norm of every row, giving a `rows × 1` column.
    pub fn row_norm(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(p >= 1.0) {
            return Err(Error::invalid("autodiff", format!("p-norm needs p >= 1, got {p}")));
        }
        let xv = self.check(x)?;
        let norms: Vec<f64> = xv.row_iter().map(|r| p_norm(r, p)).collect();
        let v = DenseMatrix::from_vec_unchecked(xv.rows(), 1, norms);
        self.push(Op::RowNorm(x, p), v, "row_norm")
    }

    /// Per-column affine map `x·scale + shift` with constant coefficients.
    pub fn column_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let xv = self.check(x)?;
        if scale.len() != xv.cols() || shift.len() != xv.cols() {
            return Err(Error::shape(
                "column_affine",
                format!("{} scales / {} shifts for {} columns", scale.len(), shift.len(), xv.cols()),
            ));
        }
        let cols = xv.cols();
        let mut out = xv.clone();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let c = i % cols;
            *v = *v * scale[c] + shift[c];
        }
        self.push(Op::ColumnAffine(x, scale.to_vec()), out, "column_affine")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.check(x)?.slice_rows(start, end)?;
        self.push(Op::SliceRows(x, start), v, "slice_rows")
    }

    /// Propagates `seed · ∂loss/∂node` to every node; `loss` must be 1×1.
    pub fn backward(&self, loss: Var, seed: f64) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called before any forward pass".into()));
        }
        let loss_value = self.check(loss)?;
        if loss_value.shape() != (1, 1) {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(DenseMatrix::scalar(seed));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::AddBias(x, bias) => {
                    let cols = g.cols();
                    let mut db = vec![0.0; cols];
                    for r in g.row_iter() {
                        for (d, v) in db.iter_mut().zip(r) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, *bias, DenseMatrix::from_vec_unchecked(1, cols, db));
                    accumulate(&mut adj, *x, g.clone());
                }
                Op::Sigmoid(x) => {
                    let d = g.zip_map(&node.value, |g, s| g * s * (1.0 - s));
                    accumulate(&mut adj, *x, d);
                }
                Op::Tanh(x) => {
                    let d = g.zip_map(&node.value, |g, t| g * (1.0 - t * t));
                    accumulate(&mut adj, *x, d);
                }
                Op::LeakyRelu(x, slope) => {
                    let slope = *slope;
                    let d = g.zip_map(self.value(*x), |g, u| if u > 0.0 { g } else { slope * g });
                    accumulate(&mut adj, *x, d);
                }
                Op::Exp(x) => {
                    let d = g.zip_map(&node.value, |g, e| g * e);
                    accumulate(&mut adj, *x, d);
                }
                Op::Log(x) => {
                    let d = g.zip_map(self.value(*x), |g, u| g / u);
                    accumulate(&mut adj, *x, d);
                }
                Op::Mean(x) => {
                    let (r, c) = self.value(*x).shape();
                    let d = DenseMatrix::filled(r, c, g.get(0, 0) / (r * c) as f64);
                    accumulate(&mut adj, *x, d);
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut adj, *x, DenseMatrix::filled(r, c, g.get(0, 0)));
                }
                Op::Affine(terms) => {
                    for &(v, c) in terms {
                        accumulate(&mut adj, v, g.map(|u| c * u));
                    }
                }
                Op::Power(x, k) => {
                    let k = *k;
                    let d = g.zip_map(self.value(*x), |g, u| {
                        if k == 0.0 {
                            0.0
                        } else {
                            g * k * u.powf(k - 1.0)
                        }
                    });
                    accumulate(&mut adj, *x, d);
                }
                Op::RowNorm(x, p) => {
                    let p = *p;
                    let xv = self.value(*x);
                    let cols = xv.cols();
                    let mut d = vec![0.0; xv.len()];
                    for r in 0..xv.rows() {
                        let norm = node.value.get(r, 0);
                        if norm == 0.0 {
                            continue;
                        }
                        let gr = g.get(r, 0);
                        for (c, &u) in xv.row(r).iter().enumerate() {
                            let partial = if p == 1.0 {
                                u.signum()
                            } else if p == 2.0 {
                                u / norm
                            } else {
                                u.signum() * (u.abs() / norm).powf(p - 1.0)
                            };
                            d[r * cols + c] = gr * partial;
                        }
                    }
                    accumulate(&mut adj, *x, DenseMatrix::from_vec_unchecked(xv.rows(), cols, d));
                }
                Op::ColumnAffine(x, scale) => {
                    let cols = scale.len();
                    let mut d = g.clone();
                    for (i, v) in d.as_mut_slice().iter_mut().enumerate() {
                        *v *= scale[i % cols];
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::SliceRows(x, start) => {
                    let xv = self.value(*x);
                    let mut d = DenseMatrix::zeros(xv.rows(), xv.cols());
                    let cols = xv.cols();
                    d.as_mut_slice()[start * cols..start * cols + g.len()].copy_from_slice(g.as_slice());
                    accumulate(&mut adj, *x, d);
                }
            }
            adj[idx] = Some(g);
        }

        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

pub(crate) fn p_norm(row: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        row.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else if p == 1.0 {
        row.iter().map(|v| v.abs()).sum()
    } else {
        row.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn accumulate(adj: &mut [Option<DenseMatrix>], var: Var, grad: DenseMatrix) {
    match &mut adj[var.0] {
        Some(existing) => existing.add_assign(&grad),
        slot @ None => *slot = Some(grad),
    }
}
