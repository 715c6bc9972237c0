use super::{eval, OdeState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerance {
            rtol,
            atol,
            max_steps: 1_000_000,
        }
    }
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

// Dormand–Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// Fifth-order minus embedded fourth-order weights; the last entry multiplies
// the derivative at the new point.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) from `t_span.0` to `t_span.1`.
///
/// A reversed span integrates the negated field forward over `|t1 - t0|`.
pub fn integrate_adaptive<S, F>(field: F, s0: &S, t_span: (f64, f64), tol: Tolerance) -> Result<S>
where
    S: OdeState + Clone,
    F: FnMut(&S) -> Result<S>,
{
    run(field, s0, t_span, tol, None)
}

/// As [`integrate_adaptive`], applying `project` to every accepted state.
pub fn integrate_adaptive_projected<S, F, P>(field: F, s0: &S, t_span: (f64, f64), tol: Tolerance, mut project: P) -> Result<S>
where
    S: OdeState + Clone,
    F: FnMut(&S) -> Result<S>,
    P: FnMut(S) -> S,
{
    run(field, s0, t_span, tol, Some(&mut project))
}

fn run<S, F>(mut field: F, s0: &S, t_span: (f64, f64), tol: Tolerance, mut project: Option<&mut dyn FnMut(S) -> S>) -> Result<S>
where
    S: OdeState + Clone,
    F: FnMut(&S) -> Result<S>,
{
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(Error::invalid("adaptive integration needs positive rtol and atol"));
    }
    let (t0, t1) = t_span;
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(s0.clone());
    }
    let sign = if t1 > t0 { 1.0 } else { -1.0 };
    let mut f = |s: &S| -> Result<S> {
        let d = eval(&mut field, s)?;
        Ok(if sign > 0.0 { d } else { d.lincomb(&[(-2.0, &d)]) })
    };

    let min_step = 1e-14 * span;
    let mut h = 1e-2 * span;
    let mut t = 0.0;
    let mut s = s0.clone();
    let mut k1 = f(&s)?;
    let mut err_prev: f64 = 1e-4;
    let mut rejected = false;
    let mut steps = 0;

    while t < span {
        if steps >= tol.max_steps {
            return Err(Error::Divergence {
                time: t0 + sign * t,
                reason: format!("exceeded {} steps", tol.max_steps),
            });
        }
        steps += 1;
        let last = t + h >= span;
        if last {
            h = span - t;
        }

        let k2 = f(&s.lincomb(&[(h * A2[0], &k1)]))?;
        let k3 = f(&s.lincomb(&[(h * A3[0], &k1), (h * A3[1], &k2)]))?;
        let k4 = f(&s.lincomb(&[(h * A4[0], &k1), (h * A4[1], &k2), (h * A4[2], &k3)]))?;
        let k5 = f(&s.lincomb(&[(h * A5[0], &k1), (h * A5[1], &k2), (h * A5[2], &k3), (h * A5[3], &k4)]))?;
        let k6 = f(&s.lincomb(&[
            (h * A6[0], &k1),
            (h * A6[1], &k2),
            (h * A6[2], &k3),
            (h * A6[3], &k4),
            (h * A6[4], &k5),
        ]))?;
        let next = s.lincomb(&[
            (h * B5[0], &k1),
            (h * B5[2], &k3),
            (h * B5[3], &k4),
            (h * B5[4], &k5),
            (h * B5[5], &k6),
        ]);
        let k7 = f(&next)?;

        let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7].map(|k| k.values());
        let (y0, y1) = (s.values(), next.values());
        let mut sq = 0.0;
        for i in 0..y0.len() {
            let e: f64 = h * (0..7).map(|j| E[j] * ks[j][i]).sum::<f64>();
            let scale = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
            sq += (e / scale).powi(2);
        }
        let err = (sq / y0.len().max(1) as f64).sqrt();

        if err <= 1.0 {
            t = if last { span } else { t + h };
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-ALPHA) * err_prev.powf(BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            let factor = if rejected { factor.min(1.0) } else { factor };
            err_prev = err.max(1e-4);
            rejected = false;
            match project.as_mut() {
                Some(proj) => {
                    s = proj(next);
                    k1 = f(&s)?;
                }
                None => {
                    s = next;
                    k1 = k7;
                }
            }
            h *= factor;
        } else {
            let factor = (SAFETY * err.powf(-ALPHA)).clamp(MIN_FACTOR, 1.0);
            h *= factor;
            rejected = true;
        }
        if h < min_step && t < span {
            return Err(Error::Divergence {
                time: t0 + sign * t,
                reason: format!("step size {h:e} fell below {min_step:e}"),
            });
        }
    }
    Ok(s)
}
