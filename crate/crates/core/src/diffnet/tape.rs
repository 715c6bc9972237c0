//! Reverse-mode differentiation over batched 2-D tensors.
//!
//! Every operation records its inputs and eagerly computes its value. The
//! backward sweep in [`Tape::grad`] is itself built out of recorded
//! operations, so the returned gradients are ordinary [`Var`]s that can be
//! differentiated again. Hamiltonian and Lagrangian dynamics need this: the
//! vector field is a gradient of a network, and training differentiates
//! through that gradient.
//!
//! Shape mismatches between operands are programming errors and panic.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { a: usize, scale: f64 },
    Sigmoid(usize),
    Exp(usize),
    /// Piecewise-linear map whose derivative is the stored mask.
    Masked { a: usize, mask: Arc<Tensor> },
    Sum(usize),
    BroadcastScalar { a: usize },
    SumRows(usize),
    BroadcastRows { a: usize },
    Gather { a: usize, idx: Arc<[usize]> },
    ScatterAdd { a: usize, idx: Arc<[usize]> },
    SolveSpd { m: usize, rhs: usize },
}

impl Op {
    fn parents(&self) -> [Option<usize>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                [Some(a), Some(b)]
            }
            Op::SolveSpd { m, rhs } => [Some(m), Some(rhs)],
            Op::Affine { a, .. }
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Masked { a, .. }
            | Op::Sum(a)
            | Op::BroadcastScalar { a }
            | Op::SumRows(a)
            | Op::BroadcastRows { a }
            | Op::Gather { a, .. }
            | Op::ScatterAdd { a, .. } => [Some(a), None],
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}[{r}x{c}]", self.id)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input value (parameter, data or constant).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Arc::new(value), Op::Leaf)
    }

    /// Records an input without copying it.
    pub fn leaf_shared(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.leaf(Tensor::zeros(rows, cols))
    }

    fn push(&self, value: Arc<Tensor>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Gradient of the scalar `output` with respect to each of `wrt`.
    ///
    /// Inputs that `output` does not depend on receive an all-zero gradient
    /// of matching shape. The gradients are recorded on this tape and can be
    /// differentiated further.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        if output.shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "gradient output must be a scalar, got {:?}",
                output.shape()
            )));
        }
        let hi = output.id;
        let lo = wrt.iter().map(|v| v.id).min().unwrap_or(hi).min(hi);
        let span = hi - lo + 1;

        // A node matters only if it depends on one of the requested inputs.
        let mut relevant = vec![false; span];
        for w in wrt {
            if w.id <= hi {
                relevant[w.id - lo] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in lo..=hi {
                if relevant[i - lo] {
                    continue;
                }
                relevant[i - lo] = nodes[i]
                    .op
                    .parents()
                    .iter()
                    .flatten()
                    .any(|&p| p >= lo && relevant[p - lo]);
            }
        }
        let needs = |p: usize| p >= lo && relevant[p - lo];

        let mut adjoint: Vec<Option<Var<'t>>> = vec![None; span];
        if relevant[hi - lo] {
            adjoint[hi - lo] = Some(self.scalar(1.0));
        }
        for i in (lo..=hi).rev() {
            let Some(g) = adjoint[i - lo] else { continue };
            if !relevant[i - lo] {
                continue;
            }
            let op = self.nodes.borrow()[i].op.clone();
            for (parent, contribution) in self.backward(&op, self.var(i), g, &needs)? {
                let slot = &mut adjoint[parent - lo];
                *slot = Some(match *slot {
                    None => contribution,
                    Some(prev) => prev + contribution,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| match w.id.checked_sub(lo).and_then(|k| adjoint.get(k).copied().flatten()) {
                Some(g) if w.id <= hi => g,
                _ => {
                    let (r, c) = w.shape();
                    self.zeros(r, c)
                }
            })
            .collect())
    }

    /// Contributions of node `y = op(..)` with upstream gradient `g` to each
    /// parent that `needs` reports as relevant.
    fn backward<'t>(
        &'t self,
        op: &Op,
        y: Var<'t>,
        g: Var<'t>,
        needs: &dyn Fn(usize) -> bool,
    ) -> Result<Vec<(usize, Var<'t>)>> {
        let v = |id| self.var(id);
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if needs(a) {
                    let ga = if ta {
                        v(b).matmul_t(tb, g, true)
                    } else {
                        g.matmul_t(false, v(b), !tb)
                    };
                    out.push((a, ga));
                }
                if needs(b) {
                    let gb = if tb {
                        g.matmul_t(true, v(a), ta)
                    } else {
                        v(a).matmul_t(!ta, g, false)
                    };
                    out.push((b, gb));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    out.push((a, g));
                }
                if needs(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    out.push((a, g));
                }
                if needs(b) {
                    out.push((b, -g));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((a, g * v(b)));
                }
                if needs(b) {
                    out.push((b, g * v(a)));
                }
            }
            Op::Affine { a, scale } => {
                if needs(a) {
                    out.push((a, g.scale(scale)));
                }
            }
            Op::Sigmoid(a) => {
                if needs(a) {
                    out.push((a, g * (y - y * y)));
                }
            }
            Op::Exp(a) => {
                if needs(a) {
                    out.push((a, g * y));
                }
            }
            Op::Masked { a, ref mask } => {
                if needs(a) {
                    out.push((a, g * self.leaf_shared(Arc::clone(mask))));
                }
            }
            Op::Sum(a) => {
                if needs(a) {
                    let (r, c) = v(a).shape();
                    out.push((a, g.broadcast_scalar(r, c)));
                }
            }
            Op::BroadcastScalar { a } => {
                if needs(a) {
                    out.push((a, g.sum()));
                }
            }
            Op::SumRows(a) => {
                if needs(a) {
                    out.push((a, g.broadcast_rows(v(a).shape().0)));
                }
            }
            Op::BroadcastRows { a } => {
                if needs(a) {
                    out.push((a, g.sum_rows()));
                }
            }
            Op::Gather { a, ref idx } => {
                if needs(a) {
                    out.push((a, g.scatter_add(Arc::clone(idx), v(a).shape().1)));
                }
            }
            Op::ScatterAdd { a, ref idx } => {
                if needs(a) {
                    out.push((a, g.gather(Arc::clone(idx))));
                }
            }
            Op::SolveSpd { m, rhs } => {
                // x = M^-1 c with M symmetric: dc = M^-1 g, dM = -dc x^T.
                let g_rhs = v(m).solve_spd(g)?;
                if needs(m) {
                    let n = y.shape().1;
                    let (ii, jj) = outer_indices(n);
                    let g_m = (g_rhs.gather(ii) * y.gather(jj)).scale(-1.0);
                    out.push((m, g_m));
                }
                if needs(rhs) {
                    out.push((rhs, g_rhs));
                }
            }
        }
        Ok(out)
    }
}

/// Column indices that turn two `n`-wide rows into their flattened outer
/// product: `out[i*n + j] = a[i] * b[j]`.
pub fn outer_indices(n: usize) -> (Arc<[usize]>, Arc<[usize]>) {
    let ii: Vec<usize> = (0..n * n).map(|k| k / n).collect();
    let jj: Vec<usize> = (0..n * n).map(|k| k % n).collect();
    (ii.into(), jj.into())
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(Arc::new(value), op)
    }

    fn check_same_shape(self, other: Var<'t>, what: &str) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{what}: operand shapes differ"
        );
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "{what}: operands live on different tapes"
        );
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(false, other, false)
    }

    /// `op(self) * op(other)` with optional transposes.
    pub fn matmul_t(self, trans_self: bool, other: Var<'t>, trans_other: bool) -> Var<'t> {
        let value = Tensor::matmul(&self.value(), trans_self, &other.value(), trans_other)
            .expect("matmul shape mismatch");
        self.unary(
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta: trans_self,
                tb: trans_other,
            },
        )
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let value = self.value().map(|x| x * factor);
        self.unary(value, Op::Affine { a: self.id, scale: factor })
    }

    /// `self + constant` elementwise.
    pub fn shift(self, offset: f64) -> Var<'t> {
        let (r, c) = self.shape();
        self + self.tape.leaf(Tensor::filled(r, c, offset))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.value().map(sigmoid);
        self.unary(value, Op::Sigmoid(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let value = self.value().map(f64::exp);
        self.unary(value, Op::Exp(self.id))
    }

    /// `x * sigmoid(x)`.
    pub fn swish(self) -> Var<'t> {
        self * self.sigmoid()
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let x = self.value();
        let mask = x.map(|v| if v > 0.0 { 1.0 } else { slope });
        let value = x.zip_map(&mask, |v, m| v * m);
        self.unary(
            value,
            Op::Masked {
                a: self.id,
                mask: Arc::new(mask),
            },
        )
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let x = self.value();
        let mask = x.map(|v| if (lo..=hi).contains(&v) { 1.0 } else { 0.0 });
        let value = x.map(|v| v.clamp(lo, hi));
        self.unary(
            value,
            Op::Masked {
                a: self.id,
                mask: Arc::new(mask),
            },
        )
    }

    /// Sum of all entries, as a `1 x 1` value.
    pub fn sum(self) -> Var<'t> {
        let value = Tensor::scalar(self.value().sum());
        self.unary(value, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn broadcast_scalar(self, rows: usize, cols: usize) -> Var<'t> {
        assert_eq!(self.shape(), (1, 1), "broadcast_scalar needs a scalar");
        let value = Tensor::filled(rows, cols, self.value().item());
        self.unary(value, Op::BroadcastScalar { a: self.id })
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(self) -> Var<'t> {
        let x = self.value();
        let mut out = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        self.unary(Tensor::row_vector(out), Op::SumRows(self.id))
    }

    /// Repeats a `1 x cols` row `rows` times.
    pub fn broadcast_rows(self, rows: usize) -> Var<'t> {
        let x = self.value();
        assert_eq!(x.rows(), 1, "broadcast_rows needs a single row");
        let mut data = Vec::with_capacity(rows * x.cols());
        for _ in 0..rows {
            data.extend_from_slice(x.data());
        }
        let value = Tensor::from_vec(rows, x.cols(), data).expect("shape");
        self.unary(value, Op::BroadcastRows { a: self.id })
    }

    /// Output column `k` is input column `idx[k]`.
    pub fn gather(self, idx: Arc<[usize]>) -> Var<'t> {
        let x = self.value();
        let (rows, cols) = x.shape();
        assert!(idx.iter().all(|&j| j < cols), "gather index out of range");
        let mut data = Vec::with_capacity(rows * idx.len());
        for i in 0..rows {
            let row = x.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        let value = Tensor::from_vec(rows, idx.len(), data).expect("shape");
        self.unary(value, Op::Gather { a: self.id, idx })
    }

    /// Input column `k` is added into output column `idx[k]` of a `width`-wide
    /// result.
    pub fn scatter_add(self, idx: Arc<[usize]>, width: usize) -> Var<'t> {
        let x = self.value();
        let (rows, cols) = x.shape();
        assert_eq!(cols, idx.len(), "scatter_add index length");
        assert!(idx.iter().all(|&j| j < width), "scatter_add index out of range");
        let mut out = Tensor::zeros(rows, width);
        for i in 0..rows {
            let row = x.row(i);
            let dst = &mut out.data_mut()[i * width..(i + 1) * width];
            for (k, &j) in idx.iter().enumerate() {
                dst[j] += row[k];
            }
        }
        self.unary(out, Op::ScatterAdd { a: self.id, idx })
    }

    /// Columns `start..start + len`.
    pub fn cols(self, start: usize, len: usize) -> Var<'t> {
        let idx: Vec<usize> = (start..start + len).collect();
        self.gather(idx.into())
    }

    /// Per-row sum, as a `rows x 1` column.
    pub fn row_sums(self) -> Var<'t> {
        let cols = self.shape().1;
        self.scatter_add(vec![0; cols].into(), 1)
    }

    /// Batched solve of `M x = rhs`, one symmetric positive-definite system
    /// per row. `self` holds each `n x n` matrix flattened row-major in a
    /// `B x n^2` tensor; `rhs` is `B x n`.
    pub fn solve_spd(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let m = self.value();
        let b = rhs.value();
        let (batch, n) = b.shape();
        if m.shape() != (batch, n * n) {
            return Err(Error::invalid(format!(
                "solve_spd: matrix batch {:?} does not match rhs {:?}",
                m.shape(),
                b.shape()
            )));
        }
        let mut out = Tensor::zeros(batch, n);
        for r in 0..batch {
            let x = cholesky_solve(m.row(r), b.row(r), n)?;
            out.data_mut()[r * n..(r + 1) * n].copy_from_slice(&x);
        }
        Ok(self.unary(
            out,
            Op::SolveSpd {
                m: self.id,
                rhs: rhs.id,
            },
        ))
    }
}

/// Concatenates columns of two equally tall values.
pub fn concat_cols<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    assert_eq!(ra, rb, "concat_cols: row counts differ");
    let width = ca + cb;
    let left: Vec<usize> = (0..ca).collect();
    let right: Vec<usize> = (ca..width).collect();
    a.scatter_add(left.into(), width) + b.scatter_add(right.into(), width)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Solves a symmetric positive-definite system given as a flattened matrix.
pub fn cholesky_solve(m: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Singularity(format!(
                        "matrix is not positive definite (pivot {i} = {s:e})"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same_shape(rhs, "add");
        let value = self.value().zip_map(&rhs.value(), |a, b| a + b);
        self.unary(value, Op::Add(self.id, rhs.id))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same_shape(rhs, "sub");
        let value = self.value().zip_map(&rhs.value(), |a, b| a - b);
        self.unary(value, Op::Sub(self.id, rhs.id))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.check_same_shape(rhs, "mul");
        let value = self.value().zip_map(&rhs.value(), |a, b| a * b);
        self.unary(value, Op::Mul(self.id, rhs.id))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
