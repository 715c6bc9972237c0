//! Ground-truth trajectory generation.

use super::sample::camera_mode;
use super::{camera, lj, render, replicator, sample_initial, toy, trajectory_seed, vector_field};
use super::{Image, PhaseState, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::integrate::{integrate_adaptive, integrate_adaptive_projected, step_explicit, step_leapfrog, step_velocity_verlet};
use crate::integrate::{IntegratorChoice, Scheme};

/// Sampled states of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<PhaseState>,
    pub derivs: Vec<PhaseState>,
    pub observations: Option<Vec<Image>>,
    pub system: SystemSpec,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Integrator used for ground truth when none is requested.
pub fn default_method(spec: &SystemSpec) -> IntegratorChoice {
    match spec.kind {
        SystemKind::MassSpring if spec.friction_lambda == 0.0 => IntegratorChoice::new(Scheme::Analytic),
        SystemKind::CameraCircle | SystemKind::CameraSpiral => IntegratorChoice::new(Scheme::Analytic),
        SystemKind::LennardJones => IntegratorChoice::new(Scheme::VelocityVerlet),
        _ => IntegratorChoice::adaptive(1e-10, 1e-10),
    }
}

fn failed_at(time: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Divergence { time, reason } => Error::Simulation { time, reason },
        Error::Numeric(reason) | Error::Singularity(reason) => Error::Simulation { time, reason },
        other => other,
    }
}

fn field_vec(spec: &SystemSpec, s: &[f64]) -> Result<Vec<f64>> {
    Ok(vector_field(spec, &PhaseState::from_slice(s)?)?.to_vec())
}

/// Advances a non-camera state by `dt`; `t` is the start time.
fn advance(spec: &SystemSpec, s: &PhaseState, t: f64, dt: f64, method: &IntegratorChoice) -> Result<PhaseState> {
    let n = s.dim();
    let game = spec.kind.is_game();
    match method.scheme {
        Scheme::Analytic => {
            let (k, m) = (spec.param("k"), spec.param("m"));
            let w = (k / m).sqrt();
            let (sin, cos) = (w * dt).sin_cos();
            let (q, p) = (s.q[0], s.p[0]);
            Ok(PhaseState::new(
                vec![q * cos + p / (m * w) * sin],
                vec![-m * w * q * sin + p * cos],
            ))
        }
        Scheme::DormandPrince => {
            let field = |x: &Vec<f64>| field_vec(spec, x);
            let out = if game {
                integrate_adaptive_projected(field, &s.to_vec(), (t, t + dt), method.tolerance(), |mut x: Vec<f64>| {
                    replicator::project_to_simplex(&mut x[..n], n / 2);
                    x
                })?
            } else {
                integrate_adaptive(field, &s.to_vec(), (t, t + dt), method.tolerance())?
            };
            PhaseState::from_slice(&out)
        }
        Scheme::Euler | Scheme::Rk2 | Scheme::Rk4 => {
            let mut out = step_explicit(|x: &Vec<f64>| field_vec(spec, x), &s.to_vec(), dt, method.scheme)?;
            if game {
                replicator::project_to_simplex(&mut out[..n], n / 2);
            }
            PhaseState::from_slice(&out)
        }
        Scheme::Leapfrog => {
            let zeros = vec![0.0; n];
            let (q, p) = if spec.kind == SystemKind::LennardJones {
                let m = spec.param("m");
                step_leapfrog(
                    |q: &Vec<f64>| Ok(lj::forces(spec, q)?.into_iter().map(|f| -f).collect()),
                    |p: &Vec<f64>| Ok(p.iter().map(|p| p / m).collect()),
                    &s.q,
                    &s.p,
                    dt,
                )?
            } else {
                step_leapfrog(
                    |q: &Vec<f64>| Ok(toy::grad_h(spec, q, &zeros)?.0),
                    |p: &Vec<f64>| Ok(toy::grad_h(spec, &s.q, p)?.1),
                    &s.q,
                    &s.p,
                    dt,
                )?
            };
            Ok(PhaseState::new(q, p))
        }
        Scheme::VelocityVerlet => {
            let substeps = (dt / lj::MD_STEP).round().max(1.0) as usize;
            let h = dt / substeps as f64;
            let masses = vec![spec.param("m"); n];
            let (mut q, mut p) = (s.q.clone(), s.p.clone());
            for _ in 0..substeps {
                (q, p) = step_velocity_verlet(|q| lj::forces(spec, q), &q, &p, &masses, h)?;
            }
            Ok(PhaseState::new(q, p))
        }
    }
}

fn check_method(spec: &SystemSpec, method: &IntegratorChoice) -> Result<()> {
    method.validate()?;
    let kind = spec.kind;
    let ok = match method.scheme {
        Scheme::Analytic => kind.is_camera() || (kind == SystemKind::MassSpring && spec.friction_lambda == 0.0),
        Scheme::VelocityVerlet => kind == SystemKind::LennardJones,
        // The double-pendulum Hamiltonian is not separable.
        Scheme::Leapfrog => {
            spec.friction_lambda == 0.0
                && matches!(
                    kind,
                    SystemKind::MassSpring | SystemKind::Pendulum | SystemKind::TwoBody | SystemKind::LennardJones
                )
        }
        _ => !kind.is_camera(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{:?} integration is not available for {}{}",
            method.scheme,
            kind,
            if spec.friction_lambda > 0.0 { " with friction" } else { "" }
        )))
    }
}

fn camera_trajectory(spec: &SystemSpec, s0: &PhaseState, dt: f64, n_steps: usize) -> Result<Trajectory> {
    let mode = camera_mode(spec.kind);
    let (a, theta0) = (spec.param("a"), spec.param("theta0"));
    let start = camera::camera_state(mode, a, theta0);
    let expected: Vec<f64> = start.position.iter().chain(&start.velocity).copied().collect();
    if s0.to_vec().iter().zip(&expected).any(|(x, y)| (x - y).abs() > 1e-9) {
        return Err(Error::invalid("camera paths must start at the state given by theta0"));
    }
    let mut states = Vec::with_capacity(n_steps);
    let mut derivs = Vec::with_capacity(n_steps);
    for t in 0..n_steps {
        let theta = theta0 + t as f64 * dt;
        let c = camera::camera_state(mode, a, theta);
        states.push(PhaseState::new(c.position.to_vec(), c.velocity.to_vec()));
        derivs.push(PhaseState::new(
            c.velocity.to_vec(),
            camera::acceleration(mode, a, theta).to_vec(),
        ));
    }
    Ok(Trajectory {
        dt,
        states,
        derivs,
        observations: None,
        system: spec.clone(),
    })
}

/// `n_steps` states sampled every `dt`, starting at `s0`.
pub fn simulate(spec: &SystemSpec, s0: &PhaseState, dt: f64, n_steps: usize, method: IntegratorChoice) -> Result<Trajectory> {
    spec.validate()?;
    spec.check_state(s0)?;
    if n_steps == 0 {
        return Err(Error::invalid("a trajectory needs at least one step"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    check_method(spec, &method)?;
    if spec.kind.is_camera() {
        return camera_trajectory(spec, s0, dt, n_steps);
    }

    let lj_box = (spec.kind == SystemKind::LennardJones).then(|| spec.param("box_length"));
    let mut states = Vec::with_capacity(n_steps);
    let mut current = s0.clone();
    states.push(s0.clone());
    for k in 1..n_steps {
        let t = (k - 1) as f64 * dt;
        let mut next = advance(spec, &current, t, dt, &method).map_err(failed_at(t))?;
        if spec.kind.is_game() {
            let d = replicator::vector_field(spec, &next.q)?;
            next.p = d.q;
        }
        if let Some(l) = lj_box {
            lj::wrap(&mut next.q, l);
        }
        if next.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                time: t + dt,
                reason: "state became non-finite".into(),
            });
        }
        states.push(next.clone());
        current = next;
    }
    let derivs = states
        .iter()
        .enumerate()
        .map(|(k, s)| vector_field(spec, s).map_err(failed_at(k as f64 * dt)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        dt,
        states,
        derivs,
        observations: None,
        system: spec.clone(),
    })
}

/// Samples, simulates and optionally renders trajectory `index` of a
/// dataset drawn with `global_seed`.
pub fn generate_trajectory(
    spec: &SystemSpec,
    global_seed: u64,
    index: u64,
    n_steps: usize,
    dt: f64,
    resolution: Option<(usize, usize)>,
) -> Result<Trajectory> {
    let (s0, drawn) = sample_initial(spec, trajectory_seed(global_seed, index))?;
    let mut traj = simulate(&drawn, &s0, dt, n_steps, default_method(&drawn))?;
    if let Some(res) = resolution {
        if drawn.kind.is_camera() {
            return Err(Error::Unsupported("camera paths have no rendered observations".into()));
        }
        let frames = traj.states.iter().map(|s| render(&drawn, s, res)).collect::<Result<Vec<_>>>()?;
        traj.observations = Some(frames);
    }
    Ok(traj)
}
