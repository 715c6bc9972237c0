//! Two-dimensional Lennard-Jones fluid in a periodic square box.
//!
//! Positions are `q = (x_1, y_1, x_2, y_2, ...)`; the truncation radius is
//! half the box edge.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{PhaseState, SystemSpec};
use crate::error::{Error, Result};
use crate::integrate::step_velocity_verlet;

/// Internal molecular-dynamics time step.
pub const MD_STEP: f64 = 0.002;
/// Langevin damping time used during equilibration.
pub const DAMPING_TIME: f64 = 0.2;
/// Number of thermostatted equilibration steps.
pub const EQUILIBRATION_STEPS: usize = 1000;

/// Default `(temperature, density)` for a particle count.
pub fn default_state(n: usize) -> (f64, f64) {
    if n == 16 {
        (0.5, 0.77)
    } else {
        (1.0, 0.04)
    }
}

/// Truncated pair potential `Θ(r_cut - r)·4ε[(σ/r)¹² - (σ/r)⁶]`.
pub fn lj_pair(r: f64, epsilon: f64, sigma: f64, r_cut: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Singularity("Lennard-Jones pair at zero separation".into()));
    }
    if r < 0.0 {
        return Err(Error::invalid(format!("negative separation {r}")));
    }
    if r >= r_cut {
        return Ok(0.0);
    }
    let s6 = (sigma / r).powi(6);
    Ok(4.0 * epsilon * (s6 * s6 - s6))
}

/// `du/dr` of the truncated pair potential.
fn lj_pair_slope(r: f64, epsilon: f64, sigma: f64, r_cut: f64) -> f64 {
    if r >= r_cut {
        return 0.0;
    }
    let s6 = (sigma / r).powi(6);
    4.0 * epsilon * (-12.0 * s6 * s6 + 6.0 * s6) / r
}

/// Componentwise `Δ - L·round(Δ/L)`, folded into `[-L/2, L/2)`.
pub fn minimal_image(delta: &[f64], box_length: f64) -> Vec<f64> {
    let half = 0.5 * box_length;
    delta
        .iter()
        .map(|&d| {
            if (-half..half).contains(&d) {
                return d;
            }
            let m = d - box_length * (d / box_length).round();
            if m >= half {
                m - box_length
            } else if m < -half {
                m + box_length
            } else {
                m
            }
        })
        .collect()
}

struct Params {
    epsilon: f64,
    sigma: f64,
    box_length: f64,
    mass: f64,
}

impl Params {
    fn from_spec(spec: &SystemSpec) -> Self {
        Params {
            epsilon: spec.param("epsilon"),
            sigma: spec.param("sigma"),
            box_length: spec.param("box_length"),
            mass: spec.param("m"),
        }
    }

    fn r_cut(&self) -> f64 {
        self.box_length / 2.0
    }

    /// Minimal-image displacement from particle `i` to `j` and its length.
    fn pair(&self, q: &[f64], i: usize, j: usize) -> Result<([f64; 2], f64)> {
        let l = self.box_length;
        let dx = q[2 * j] - q[2 * i];
        let dy = q[2 * j + 1] - q[2 * i + 1];
        let d = [dx - l * (dx / l).round(), dy - l * (dy / l).round()];
        let r = d[0].hypot(d[1]);
        if r == 0.0 {
            return Err(Error::Singularity(format!("particles {i} and {j} coincide")));
        }
        Ok((d, r))
    }

    fn potential(&self, q: &[f64]) -> Result<f64> {
        let n = q.len() / 2;
        let mut u = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (_, r) = self.pair(q, i, j)?;
                u += lj_pair(r, self.epsilon, self.sigma, self.r_cut())?;
            }
        }
        Ok(u)
    }

    fn forces(&self, q: &[f64]) -> Result<Vec<f64>> {
        let n = q.len() / 2;
        let mut f = vec![0.0; q.len()];
        for i in 0..n {
            for j in i + 1..n {
                let (d, r) = self.pair(q, i, j)?;
                let c = lj_pair_slope(r, self.epsilon, self.sigma, self.r_cut()) / r;
                for k in 0..2 {
                    f[2 * i + k] += c * d[k];
                    f[2 * j + k] -= c * d[k];
                }
            }
        }
        Ok(f)
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        p.iter().map(|p| p * p).sum::<f64>() / (2.0 * self.mass)
    }
}

pub fn potential(spec: &SystemSpec, q: &[f64]) -> Result<f64> {
    Params::from_spec(spec).potential(q)
}

pub fn energy(spec: &SystemSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    let par = Params::from_spec(spec);
    Ok(par.kinetic(p) + par.potential(q)?)
}

/// `-∂U/∂q`.
pub fn forces(spec: &SystemSpec, q: &[f64]) -> Result<Vec<f64>> {
    Params::from_spec(spec).forces(q)
}

/// Maps positions into `[0, L)`.
pub fn wrap(q: &mut [f64], box_length: f64) {
    for x in q {
        *x -= box_length * (*x / box_length).floor();
    }
}

/// Jittered square lattice with Maxwell momenta, thermostatted with
/// Langevin dynamics and then rescaled to the mean equilibration energy.
pub fn initial_state<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> Result<PhaseState> {
    let par = Params::from_spec(spec);
    let n = spec.particle_count();
    let temperature = spec.param("temperature");
    let l = par.box_length;
    let side = (n as f64).sqrt().ceil() as usize;
    let spacing = l / side as f64;
    let jitter = 0.1 * par.sigma;

    let mut q = Vec::with_capacity(2 * n);
    for k in 0..n {
        let (ix, iy) = (k % side, k / side);
        q.push((ix as f64 + 0.5) * spacing + rng.random_range(-jitter..=jitter));
        q.push((iy as f64 + 0.5) * spacing + rng.random_range(-jitter..=jitter));
    }
    let thermal = Normal::new(0.0, (par.mass * temperature).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut p: Vec<f64> = (0..2 * n).map(|_| thermal.sample(rng)).collect();
    remove_drift(&mut p);

    let masses = vec![par.mass; 2 * n];
    let gamma = 1.0 / DAMPING_TIME;
    let fade = (-gamma * MD_STEP).exp();
    let kick = ((1.0 - fade * fade) * par.mass * temperature).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut energy_sum = 0.0;
    for _ in 0..EQUILIBRATION_STEPS {
        // Velocity Verlet followed by an exact Ornstein-Uhlenbeck momentum update.
        let (q1, p1) = step_velocity_verlet(|q| par.forces(q), &q, &p, &masses, MD_STEP)?;
        q = q1;
        p = p1.into_iter().map(|p| fade * p + kick * unit.sample(rng)).collect();
        energy_sum += par.kinetic(&p) + par.potential(&q)?;
    }
    remove_drift(&mut p);
    let target = energy_sum / EQUILIBRATION_STEPS as f64;
    let kinetic = par.kinetic(&p);
    let wanted = target - par.potential(&q)?;
    if kinetic > 0.0 && wanted > 0.0 {
        let s = (wanted / kinetic).sqrt();
        p.iter_mut().for_each(|p| *p *= s);
    }
    wrap(&mut q, l);
    Ok(PhaseState::new(q, p))
}

fn remove_drift(p: &mut [f64]) {
    let n = p.len() / 2;
    for k in 0..2 {
        let mean = (0..n).map(|i| p[2 * i + k]).sum::<f64>() / n as f64;
        for i in 0..n {
            p[2 * i + k] -= mean;
        }
    }
}
