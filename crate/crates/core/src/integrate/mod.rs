//! Fixed-step, adaptive and symplectic integrators.
//!
//! Everything here is generic over [`OdeState`], so the same code advances
//! plain `Vec<f64>` states for simulation and tape [`Var`]s for training.

mod adaptive;

use serde::{Deserialize, Serialize};

pub use adaptive::{integrate_adaptive, integrate_adaptive_projected, Tolerance};

use crate::diffnet::Var;
use crate::error::{Error, Result};

/// A state that integrators can form linear combinations of.
pub trait OdeState: Sized {
    /// `self + Σ c_i x_i`.
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self;

    /// Current numeric values, flattened.
    fn values(&self) -> Vec<f64>;
}

impl OdeState for Vec<f64> {
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        let mut out = self.clone();
        for &(c, x) in terms {
            debug_assert_eq!(x.len(), out.len());
            for (o, v) in out.iter_mut().zip(x) {
                *o += c * v;
            }
        }
        out
    }

    fn values(&self) -> Vec<f64> {
        self.clone()
    }
}

impl<'t> OdeState for Var<'t> {
    fn lincomb(&self, terms: &[(f64, &Self)]) -> Self {
        terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .fold(*self, |acc, &(c, x)| acc + x.scale(c))
    }

    fn values(&self) -> Vec<f64> {
        self.value().data().to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk2,
    Rk4,
    DormandPrince,
    Leapfrog,
    VelocityVerlet,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorChoice {
    pub scheme: Scheme,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl IntegratorChoice {
    pub fn new(scheme: Scheme) -> Self {
        IntegratorChoice {
            scheme,
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 1_000_000,
        }
    }

    /// Dormand–Prince with the given tolerances.
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        IntegratorChoice {
            rtol,
            atol,
            ..Self::new(Scheme::DormandPrince)
        }
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::DormandPrince && !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("Dormand–Prince needs positive rtol and atol"));
        }
        Ok(())
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Numeric(format!("{what} produced {} at index {i}", values[i]))),
    }
}

fn eval<S: OdeState>(field: &mut impl FnMut(&S) -> Result<S>, s: &S) -> Result<S> {
    let d = field(s)?;
    check_finite(&d.values(), "vector field")?;
    Ok(d)
}

/// One fixed step of Euler, midpoint RK2 or classical RK4.
pub fn step_explicit<S, F>(mut field: F, s: &S, dt: f64, scheme: Scheme) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S>,
{
    match scheme {
        Scheme::Euler => {
            let k1 = eval(&mut field, s)?;
            Ok(s.lincomb(&[(dt, &k1)]))
        }
        Scheme::Rk2 => {
            let k1 = eval(&mut field, s)?;
            let k2 = eval(&mut field, &s.lincomb(&[(0.5 * dt, &k1)]))?;
            Ok(s.lincomb(&[(dt, &k2)]))
        }
        Scheme::Rk4 => {
            let k1 = eval(&mut field, s)?;
            let k2 = eval(&mut field, &s.lincomb(&[(0.5 * dt, &k1)]))?;
            let k3 = eval(&mut field, &s.lincomb(&[(0.5 * dt, &k2)]))?;
            let k4 = eval(&mut field, &s.lincomb(&[(dt, &k3)]))?;
            Ok(s.lincomb(&[
                (dt / 6.0, &k1),
                (dt / 3.0, &k2),
                (dt / 3.0, &k3),
                (dt / 6.0, &k4),
            ]))
        }
        other => Err(Error::invalid(format!("{other:?} is not an explicit Runge–Kutta scheme"))),
    }
}

/// Kick-drift-kick leapfrog for `H = V(q) + T(p)`.
pub fn step_leapfrog<S, Fq, Fp>(mut dh_dq: Fq, mut dh_dp: Fp, q: &S, p: &S, dt: f64) -> Result<(S, S)>
where
    S: OdeState,
    Fq: FnMut(&S) -> Result<S>,
    Fp: FnMut(&S) -> Result<S>,
{
    let half = 0.5 * dt;
    let p_half = p.lincomb(&[(-half, &eval(&mut dh_dq, q)?)]);
    let q_next = q.lincomb(&[(dt, &eval(&mut dh_dp, &p_half)?)]);
    let p_next = p_half.lincomb(&[(-half, &eval(&mut dh_dq, &q_next)?)]);
    Ok((q_next, p_next))
}

/// Velocity Verlet for `H = U(q) + Σ p_i²/(2 m_i)`; `force` returns `-∂U/∂q`.
pub fn step_velocity_verlet<F>(mut force: F, q: &[f64], p: &[f64], masses: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if q.len() != p.len() || q.len() != masses.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            actual: p.len().min(masses.len()),
        });
    }
    let half = 0.5 * dt;
    let f0 = force(q)?;
    check_finite(&f0, "force")?;
    let p_half: Vec<f64> = p.iter().zip(&f0).map(|(p, f)| p + half * f).collect();
    let q_next: Vec<f64> = q
        .iter()
        .zip(&p_half)
        .zip(masses)
        .map(|((q, p), m)| q + dt * p / m)
        .collect();
    let f1 = force(&q_next)?;
    check_finite(&f1, "force")?;
    let p_next = p_half.iter().zip(&f1).map(|(p, f)| p + half * f).collect();
    Ok((q_next, p_next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_field(s: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(s.clone())
    }

    #[test]
    fn rk4_matches_taylor() {
        let h: f64 = 0.1;
        let taylor = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let s = step_explicit(exp_field, &vec![1.0], h, Scheme::Rk4).unwrap();
        assert!((s[0] - taylor).abs() < 1e-15);
        assert!((s[0] - 1.105_170_833_333_333).abs() < 1e-12);
    }

    #[test]
    fn euler_and_rk2() {
        let s = step_explicit(exp_field, &vec![1.0], 0.1, Scheme::Euler).unwrap();
        assert!((s[0] - 1.1).abs() < 1e-15);
        let s = step_explicit(exp_field, &vec![1.0], 0.1, Scheme::Rk2).unwrap();
        assert!((s[0] - 1.105).abs() < 1e-15);
    }

    #[test]
    fn zero_field_is_identity() {
        for scheme in [Scheme::Euler, Scheme::Rk2, Scheme::Rk4] {
            let s0 = vec![0.3, -2.0];
            let s = step_explicit(|s: &Vec<f64>| Ok(vec![0.0; s.len()]), &s0, 0.7, scheme).unwrap();
            assert_eq!(s, s0);
        }
    }

    #[test]
    fn non_finite_field_is_error() {
        let err = step_explicit(|_: &Vec<f64>| Ok(vec![f64::NAN]), &vec![1.0], 0.1, Scheme::Euler).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(step_explicit(exp_field, &vec![1.0], 0.1, Scheme::Leapfrog).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut s = vec![1.0];
            for _ in 0..n {
                s = step_explicit(exp_field, &s, h, Scheme::Rk4).unwrap();
            }
            (s[0] - 1f64.exp()).abs()
        };
        let ratio = err(10) / err(20);
        assert!((ratio / 16.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn leapfrog_hand_step() {
        let (q, p) = step_leapfrog(|q: &Vec<f64>| Ok(q.clone()), |p: &Vec<f64>| Ok(p.clone()), &vec![1.0], &vec![0.0], 0.1).unwrap();
        assert!((q[0] - 0.995).abs() < 1e-15);
        assert!((p[0] + 0.099_75).abs() < 1e-15);
    }

    #[test]
    fn leapfrog_free_particle() {
        let (q, p) = step_leapfrog(
            |q: &Vec<f64>| Ok(vec![0.0; q.len()]),
            |p: &Vec<f64>| Ok(p.iter().map(|x| 2.0 * x).collect()),
            &vec![1.0, 2.0],
            &vec![0.5, -1.0],
            0.1,
        )
        .unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert!((q[0] - 1.1).abs() < 1e-15 && (q[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn verlet_matches_leapfrog_on_harmonic() {
        let (k, m) = (2.0, 0.5);
        let (q0, p0) = (vec![0.8], vec![-0.3]);
        let (qv, pv) = step_velocity_verlet(|q| Ok(vec![-k * q[0]]), &q0, &p0, &[m], 0.05).unwrap();
        let (ql, pl) = step_leapfrog(|q: &Vec<f64>| Ok(vec![k * q[0]]), |p: &Vec<f64>| Ok(vec![p[0] / m]), &q0, &p0, 0.05).unwrap();
        assert!((qv[0] - ql[0]).abs() < 1e-12 && (pv[0] - pl[0]).abs() < 1e-12);
    }

    #[test]
    fn verlet_zero_force() {
        let (q, p) = step_velocity_verlet(|q| Ok(vec![0.0; q.len()]), &[1.0, 0.0], &[2.0, -1.0], &[2.0, 0.5], 0.1).unwrap();
        assert_eq!(p, vec![2.0, -1.0]);
        assert!((q[0] - 1.1).abs() < 1e-15 && (q[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn choice_validation() {
        assert!(IntegratorChoice::adaptive(0.0, 1e-6).validate().is_err());
        assert!(IntegratorChoice::adaptive(1e-6, 1e-6).validate().is_ok());
        assert!(IntegratorChoice::new(Scheme::Leapfrog).validate().is_ok());
    }
}
