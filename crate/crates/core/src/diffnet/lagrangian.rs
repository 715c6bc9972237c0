//! Equations of motion for a learned Lagrangian `L = q̇ᵀM(q)q̇/2 - V(q)` with
//! `M = F Fᵀ + λI` and `F` lower triangular.

use std::sync::Arc;

use super::mlp::{MlpParams, MlpVars};
use super::tape::{cholesky_solve, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of free entries in an `n x n` lower-triangular matrix.
pub fn tril_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Flat positions (`i*n + j`, `i >= j`) of lower-triangular entries, row by row.
fn tril_positions(n: usize) -> Arc<[usize]> {
    (0..n)
        .flat_map(|i| (0..=i).map(move |j| i * n + j))
        .collect::<Vec<_>>()
        .into()
}

/// The mass matrix and the right-hand side of `M q̈ = c`, batched by rows.
#[derive(Debug, Clone, Copy)]
pub struct LagrangianTerms<'t> {
    /// `B x n²`, each row a flattened symmetric matrix.
    pub mass: Var<'t>,
    /// `B x n`.
    pub force: Var<'t>,
}

impl<'t> LagrangianTerms<'t> {
    pub fn acceleration(&self) -> Result<Var<'t>> {
        self.mass.solve_spd(self.force)
    }
}

/// Records `M(q)` and `c(q, q̇) = ∂L/∂q - (∂²L/∂q̇∂q) q̇` on the tape.
///
/// `q` and `qdot` are `B x n`; `fnet` maps `q` to the `n(n+1)/2`
/// lower-triangular entries of `F`, `vnet` maps `q` to the potential.
pub fn lagrangian_terms<'t>(
    tape: &'t Tape,
    fnet: &MlpVars<'t>,
    vnet: &MlpVars<'t>,
    lambda: f64,
    q: Var<'t>,
    qdot: Var<'t>,
) -> Result<LagrangianTerms<'t>> {
    let (batch, n) = q.shape();
    if qdot.shape() != (batch, n) {
        return Err(Error::invalid(format!(
            "q is {:?} but q̇ is {:?}",
            q.shape(),
            qdot.shape()
        )));
    }
    let entries = fnet.forward(q);
    if entries.shape() != (batch, tril_len(n)) {
        return Err(Error::invalid(format!(
            "F network emits {} columns, expected {}",
            entries.shape().1,
            tril_len(n)
        )));
    }
    let f = entries.scatter_add(tril_positions(n), n * n);

    // u = Fᵀq̇, so q̇ᵀ F Fᵀ q̇ = |u|² and F Fᵀ q̇ = F u.
    // Pairs (i, k) enumerate the entries F_ik in row-major order.
    let f_ik: Arc<[usize]> = (0..n * n).collect::<Vec<_>>().into();
    let i_of: Arc<[usize]> = (0..n * n).map(|x| x / n).collect::<Vec<_>>().into();
    let k_of: Arc<[usize]> = (0..n * n).map(|x| x % n).collect::<Vec<_>>().into();
    let u = (f.gather(Arc::clone(&f_ik)) * qdot.gather(Arc::clone(&i_of))).scatter_add(Arc::clone(&k_of), n);
    let fu = (f.gather(f_ik) * u.gather(k_of)).scatter_add(i_of, n);
    let momentum = fu + qdot.scale(lambda);

    let kinetic = (u * u).sum().scale(0.5) + (qdot * qdot).sum().scale(0.5 * lambda);
    let lagrangian = kinetic - vnet.forward(q).sum();
    let dl_dq = tape.grad(lagrangian, &[q])?[0];

    // Directional derivative of q ↦ M(q)q̇ along q̇, as the gradient with
    // respect to a dummy cotangent of the vector-Jacobian product.
    let probe = tape.zeros(batch, n);
    let vjp = tape.grad((momentum * probe).sum(), &[q])?[0];
    let mixed = tape.grad((vjp * qdot).sum(), &[probe])?[0];

    // M = F Fᵀ + λI: M_ij = Σ_k F_ik F_jk.
    let mut a = Vec::with_capacity(n * n * n);
    let mut b = Vec::with_capacity(n * n * n);
    let mut dst = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                a.push(i * n + k);
                b.push(j * n + k);
                dst.push(i * n + j);
            }
        }
    }
    let mut ridge = Tensor::zeros(batch, n * n);
    for r in 0..batch {
        for i in 0..n {
            ridge.set(r, i * n + i, lambda);
        }
    }
    let mass = (f.gather(a.into()) * f.gather(b.into())).scatter_add(dst.into(), n * n) + tape.leaf(ridge);

    Ok(LagrangianTerms {
        mass,
        force: dl_dq - mixed,
    })
}

/// Single-state evaluation of `(M, c)`.
///
/// Fails with a singularity error when `M` is not positive definite.
pub fn second_order_lagrangian(
    fnet: &MlpParams,
    vnet: &MlpParams,
    lambda: f64,
    q: &[f64],
    qdot: &[f64],
) -> Result<(Tensor, Vec<f64>)> {
    let n = q.len();
    if qdot.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: qdot.len(),
        });
    }
    if fnet.in_dim() != n || fnet.out_dim() != tril_len(n) || vnet.in_dim() != n || vnet.out_dim() != 1 {
        return Err(Error::invalid(format!(
            "networks do not fit a {n}-dimensional configuration space"
        )));
    }
    let tape = Tape::new();
    let fv = fnet.on_tape(&tape);
    let vv = vnet.on_tape(&tape);
    let qv = tape.leaf(Tensor::row_vector(q.to_vec()));
    let qdv = tape.leaf(Tensor::row_vector(qdot.to_vec()));
    let terms = lagrangian_terms(&tape, &fv, &vv, lambda, qv, qdv)?;
    let mass = Tensor::from_vec(n, n, terms.mass.value().data().to_vec())?;
    // Positive definiteness check.
    cholesky_solve(mass.data(), &vec![0.0; n], n)?;
    Ok((mass, terms.force.value().data().to_vec()))
}
