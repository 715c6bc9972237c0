//! Closed-form Hamiltonians of the toy-physics systems and their partials.
//!
//! Two-body coordinates are `q = (x1, y1, x2, y2)` with momenta in the same
//! layout.

use super::{SystemKind, SystemSpec};
use crate::error::{Error, Result};

pub fn energy(spec: &SystemSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    let par = |n: &str| spec.param(n);
    match spec.kind {
        SystemKind::MassSpring => {
            let (k, m) = (par("k"), par("m"));
            Ok(k * q[0] * q[0] / 2.0 + p[0] * p[0] / (2.0 * m))
        }
        SystemKind::Pendulum => {
            let (m, g, l) = (par("m"), par("g"), par("l"));
            Ok(m * l * g * (1.0 - q[0].cos()) + p[0] * p[0] / (2.0 * l * m))
        }
        SystemKind::DoublePendulum => {
            let d = DoublePendulum::from_spec(spec);
            Ok(d.kinetic(q, p) + d.potential(q))
        }
        SystemKind::TwoBody => {
            let (g, m1, m2) = (par("g"), par("m1"), par("m2"));
            let r = separation(q)?;
            let kin = (p[0] * p[0] + p[1] * p[1]) / (2.0 * m1) + (p[2] * p[2] + p[3] * p[3]) / (2.0 * m2);
            Ok(-g * m1 * m2 / r + kin)
        }
        other => Err(Error::Unsupported(format!("{other} is not a toy-physics system"))),
    }
}

/// `(∂H/∂q, ∂H/∂p)`.
pub fn grad_h(spec: &SystemSpec, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let par = |n: &str| spec.param(n);
    match spec.kind {
        SystemKind::MassSpring => {
            let (k, m) = (par("k"), par("m"));
            Ok((vec![k * q[0]], vec![p[0] / m]))
        }
        SystemKind::Pendulum => {
            let (m, g, l) = (par("m"), par("g"), par("l"));
            Ok((vec![m * l * g * q[0].sin()], vec![p[0] / (l * m)]))
        }
        SystemKind::DoublePendulum => Ok(DoublePendulum::from_spec(spec).grad(q, p)),
        SystemKind::TwoBody => {
            let (g, m1, m2) = (par("g"), par("m1"), par("m2"));
            let r = separation(q)?;
            let c = g * m1 * m2 / (r * r * r);
            let (dx, dy) = (q[0] - q[2], q[1] - q[3]);
            Ok((
                vec![c * dx, c * dy, -c * dx, -c * dy],
                vec![p[0] / m1, p[1] / m1, p[2] / m2, p[3] / m2],
            ))
        }
        other => Err(Error::Unsupported(format!("{other} is not a toy-physics system"))),
    }
}

fn separation(q: &[f64]) -> Result<f64> {
    let r = ((q[0] - q[2]).powi(2) + (q[1] - q[3]).powi(2)).sqrt();
    if r == 0.0 {
        return Err(Error::Singularity("two bodies coincide".into()));
    }
    Ok(r)
}

struct DoublePendulum {
    m1: f64,
    m2: f64,
    l1: f64,
    l2: f64,
    g: f64,
}

impl DoublePendulum {
    fn from_spec(spec: &SystemSpec) -> Self {
        DoublePendulum {
            m1: spec.param("m1"),
            m2: spec.param("m2"),
            l1: spec.param("l1"),
            l2: spec.param("l2"),
            g: spec.param("g"),
        }
    }

    /// Numerator and denominator of the kinetic term.
    fn parts(&self, q: &[f64], p: &[f64]) -> (f64, f64) {
        let DoublePendulum { m1, m2, l1, l2, .. } = *self;
        let (s, c) = (q[0] - q[1]).sin_cos();
        let num = m2 * l2 * l2 * p[0] * p[0] + (m1 + m2) * l1 * l1 * p[1] * p[1] - 2.0 * m2 * l1 * l2 * p[0] * p[1] * c;
        let den = 2.0 * m2 * l1 * l1 * l2 * l2 * (m1 + m2 * s * s);
        (num, den)
    }

    fn kinetic(&self, q: &[f64], p: &[f64]) -> f64 {
        let (num, den) = self.parts(q, p);
        num / den
    }

    fn potential(&self, q: &[f64]) -> f64 {
        -(self.m1 + self.m2) * self.g * self.l1 * q[0].cos() - self.m2 * self.g * self.l2 * q[1].cos()
    }

    fn grad(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let DoublePendulum { m1, m2, l1, l2, g } = *self;
        let (s, c) = (q[0] - q[1]).sin_cos();
        let (num, den) = self.parts(q, p);

        let dk_dp1 = (2.0 * m2 * l2 * l2 * p[0] - 2.0 * m2 * l1 * l2 * p[1] * c) / den;
        let dk_dp2 = (2.0 * (m1 + m2) * l1 * l1 * p[1] - 2.0 * m2 * l1 * l2 * p[0] * c) / den;

        // Both N and D depend on q only through q1 - q2.
        let dnum = 2.0 * m2 * l1 * l2 * p[0] * p[1] * s;
        let dden = 4.0 * m2 * m2 * l1 * l1 * l2 * l2 * s * c;
        let dk_dq1 = (dnum * den - num * dden) / (den * den);

        let dv_dq1 = (m1 + m2) * g * l1 * q[0].sin();
        let dv_dq2 = m2 * g * l2 * q[1].sin();
        (vec![dk_dq1 + dv_dq1, -dk_dq1 + dv_dq2], vec![dk_dp1, dk_dp2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::central_difference;

    fn check_partials(spec: &SystemSpec, q: &[f64], p: &[f64]) {
        let (gq, gp) = grad_h(spec, q, p).unwrap();
        let n = q.len();
        let s: Vec<f64> = q.iter().chain(p).copied().collect();
        let fd = central_difference(|x| energy(spec, &x[..n], &x[n..]).unwrap(), &s, 1e-6);
        for (i, (a, b)) in gq.iter().chain(&gp).zip(&fd).enumerate() {
            assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()), "{}: component {i}: {a} vs {b}", spec.kind);
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let states: [(SystemKind, &[f64], &[f64]); 5] = [
            (SystemKind::MassSpring, &[0.7], &[-0.4]),
            (SystemKind::Pendulum, &[1.9], &[0.6]),
            (SystemKind::DoublePendulum, &[1.3, -0.8], &[0.9, -1.7]),
            (SystemKind::DoublePendulum, &[-2.1, 2.2], &[1.4, 0.3]),
            (SystemKind::TwoBody, &[0.3, -0.2, -0.5, 0.6], &[0.1, 0.4, -0.1, -0.4]),
        ];
        for (kind, q, p) in states {
            check_partials(&SystemSpec::new(kind), q, p);
        }
        let skewed = SystemSpec::new(SystemKind::DoublePendulum)
            .with_param("m1", 0.41)
            .with_param("m2", 0.58)
            .with_param("l1", 0.8)
            .with_param("l2", 0.95)
            .with_param("g", 3.7);
        check_partials(&skewed, &[0.4, 2.0], &[-1.1, 0.5]);
        let two = SystemSpec::new(SystemKind::TwoBody).with_param("m1", 0.6).with_param("g", 1.3);
        check_partials(&two, &[1.0, 0.1, -0.2, -0.3], &[0.0, 0.7, 0.2, -0.5]);
    }

    #[test]
    fn double_pendulum_rest_energy() {
        let spec = SystemSpec::new(SystemKind::DoublePendulum);
        let e = energy(&spec, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((e + (1.0 * 3.0 * 1.0 + 0.5 * 3.0 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn coincident_bodies_are_singular() {
        let spec = SystemSpec::new(SystemKind::TwoBody);
        assert!(matches!(
            energy(&spec, &[1.0, 1.0, 1.0, 1.0], &[0.0; 4]),
            Err(Error::Singularity(_))
        ));
    }
}
