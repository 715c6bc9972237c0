//! Initial-condition and hyperparameter sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::{camera, lj, CameraMode, PhaseState, SystemKind, SystemSpec};
use crate::error::Result;

/// Splitmix64 mix of a global seed and a trajectory index.
pub fn trajectory_seed(global_seed: u64, index: u64) -> u64 {
    let mut z = global_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Point uniform on the annulus `r1 ≤ |(a, b)| ≤ r2`.
fn annulus<R: Rng + ?Sized>(rng: &mut R, r1: f64, r2: f64) -> (f64, f64) {
    let r = rng.random_range(r1 * r1..=r2 * r2).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    (r * phi.cos(), r * phi.sin())
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..=hi)
}

/// Colour-mode hyperparameter draws.
fn resample(spec: &SystemSpec, rng: &mut ChaCha8Rng) -> SystemSpec {
    let mut out = spec.clone();
    let draws: Vec<(&str, f64)> = match spec.kind {
        SystemKind::MassSpring => vec![("k", 2.0), ("m", uniform(rng, 0.2, 1.0))],
        SystemKind::Pendulum => vec![
            ("m", uniform(rng, 0.5, 1.5)),
            ("g", uniform(rng, 3.0, 4.0)),
            ("l", uniform(rng, 0.5, 1.0)),
        ],
        SystemKind::DoublePendulum => vec![
            ("m1", uniform(rng, 0.4, 0.6)),
            ("m2", uniform(rng, 0.4, 0.6)),
            ("g", uniform(rng, 2.5, 4.0)),
            ("l1", uniform(rng, 0.75, 1.0)),
            ("l2", uniform(rng, 0.75, 1.0)),
        ],
        SystemKind::TwoBody => vec![
            ("m1", uniform(rng, 0.5, 1.5)),
            ("m2", uniform(rng, 0.5, 1.5)),
            ("g", uniform(rng, 0.5, 1.5)),
        ],
        _ => Vec::new(),
    };
    for (name, value) in draws {
        out.params.insert(name.to_string(), value);
    }
    out.params.insert("hue".into(), rng.random_range(0.0..1.0));
    out.params.insert("offset_x".into(), uniform(rng, -0.3, 0.3));
    out.params.insert("offset_y".into(), uniform(rng, -0.3, 0.3));
    out
}

/// Bounded orbit with centre of mass at rest at the origin.
fn two_body<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> PhaseState {
    let (g, m1, m2) = (spec.param("g"), spec.param("m1"), spec.param("m2"));
    let total = m1 + m2;
    let mu = m1 * m2 / total;
    let r = uniform(rng, 0.5, 1.5);
    let e = uniform(rng, 0.0, 0.3);
    // Relative speed at periapsis of an orbit with eccentricity e.
    let v = (g * total * (1.0 + e) / r).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let spin = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let (ux, uy) = (phi.cos(), phi.sin());
    let (tx, ty) = (-spin * uy, spin * ux);
    let q = vec![-m2 / total * r * ux, -m2 / total * r * uy, m1 / total * r * ux, m1 / total * r * uy];
    let p = vec![-mu * v * tx, -mu * v * ty, mu * v * tx, mu * v * ty];
    PhaseState::new(q, p)
}

/// Uniform point on the product of two simplices.
fn simplex_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut q = Vec::with_capacity(2 * n);
    for _ in 0..2 {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        q.extend(draws.iter().map(|d| d / total));
    }
    q
}

/// Initial state for trajectory seed `seed`, with hyperparameters redrawn
/// in colour mode.
pub fn sample_initial(spec: &SystemSpec, seed: u64) -> Result<(PhaseState, SystemSpec)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = if spec.colour_mode { resample(spec, &mut rng) } else { spec.clone() };
    let state = match spec.kind {
        SystemKind::MassSpring => {
            let (q, u) = annulus(&mut rng, 0.1, 1.0);
            let scale = (spec.param("k") * spec.param("m")).sqrt();
            PhaseState::new(vec![q], vec![u * scale])
        }
        SystemKind::Pendulum => {
            let (q, p) = annulus(&mut rng, 1.3, 2.3);
            PhaseState::new(vec![q], vec![p])
        }
        SystemKind::DoublePendulum => {
            let (q1, p1) = annulus(&mut rng, 1.3, 2.3);
            let (q2, p2) = annulus(&mut rng, 1.3, 2.3);
            PhaseState::new(vec![q1, q2], vec![p1, p2])
        }
        SystemKind::TwoBody => two_body(&spec, &mut rng),
        SystemKind::MatchingPennies | SystemKind::RockPaperScissors => {
            let (n, _) = spec.payoff()?;
            let q = simplex_pair(n, &mut rng);
            let d = super::replicator::vector_field(&spec, &q)?;
            PhaseState::new(q, d.q)
        }
        SystemKind::LennardJones => lj::initial_state(&spec, &mut rng)?,
        SystemKind::CameraCircle | SystemKind::CameraSpiral => {
            let mode = camera_mode(spec.kind);
            let s = camera::camera_state(mode, spec.param("a"), spec.param("theta0"));
            PhaseState::new(s.position.to_vec(), s.velocity.to_vec())
        }
    };
    Ok((state, spec))
}

pub(crate) fn camera_mode(kind: SystemKind) -> CameraMode {
    if kind == SystemKind::CameraSpiral {
        CameraMode::Spiral
    } else {
        CameraMode::Circle
    }
}
