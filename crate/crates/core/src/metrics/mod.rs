//! Rollout quality metrics.
//!
//! Everything works on flattened observations, so the same code scores
//! rendered frames and state vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{observations, Direction, ModelClass, TrainMode, TrainedModel};
use crate::systems::{energy, PhaseState, SystemSpec, Trajectory};

/// Threshold on the normalised error.
pub const DEFAULT_EPS: f64 = 0.025;
pub const DEFAULT_HORIZON: usize = 256;
pub const DEFAULT_N_TRAJ: usize = 20;

/// `‖x - x̂‖² / ‖x‖²`.
pub fn normalized_mse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: xhat.len(),
        });
    }
    let norm: f64 = x.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let err: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / norm)
}

/// Fraction of the sequence before the first error above `eps`.
///
/// NaN errors count as above the threshold.
pub fn vpt_from_errors(errors: &[f64], eps: f64) -> f64 {
    match errors.iter().position(|e| !(*e <= eps)) {
        Some(t) => t as f64 / errors.len() as f64,
        None => 1.0,
    }
}

/// Per-step normalised errors of `pred` against `gt`.
pub fn step_errors<A: AsRef<[f64]>, B: AsRef<[f64]>>(gt: &[A], pred: &[B]) -> Result<Vec<f64>> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    gt.iter().zip(pred).map(|(g, p)| normalized_mse(g.as_ref(), p.as_ref())).collect()
}

/// Valid prediction time of `pred` against `gt`, in `[0, 1]`.
pub fn vpt<A: AsRef<[f64]>, B: AsRef<[f64]>>(gt: &[A], pred: &[B], eps: f64) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::invalid("VPT needs at least one step"));
    }
    Ok(vpt_from_errors(&step_errors(gt, pred)?, eps))
}

/// Maximum relative deviation of the energy from its initial value.
pub fn energy_drift(traj: &Trajectory, spec: &SystemSpec) -> Result<f64> {
    state_energy_drift(&traj.states, spec)
}

fn state_energy_drift(states: &[PhaseState], spec: &SystemSpec) -> Result<f64> {
    let Some(first) = states.first() else {
        return Ok(0.0);
    };
    let e0 = energy(spec, first)?;
    states.iter().try_fold(0.0f64, |worst, s| {
        Ok(worst.max((energy(spec, s)? - e0).abs() / (e0.abs() + 1e-12)))
    })
}

/// Something that predicts observations from a conditioning window.
pub trait Predictor: Sync {
    /// Number of conditioning frames.
    fn window(&self) -> usize;

    /// `n_frames` observations starting at the frame of the last context
    /// element and moving in `direction`.
    fn predict(&self, context: &[&[f64]], n_frames: usize, direction: Direction) -> Result<Vec<Vec<f64>>>;

    fn supports_backward(&self) -> bool {
        true
    }
}

impl Predictor for TrainedModel {
    fn window(&self) -> usize {
        self.window
    }

    fn predict(&self, context: &[&[f64]], n_frames: usize, direction: Direction) -> Result<Vec<Vec<f64>>> {
        TrainedModel::predict(self, context, n_frames, direction)
    }

    fn supports_backward(&self) -> bool {
        !self.dynamics.class.is_recurrent()
    }
}

/// Mean normalised error over the first `t` predicted frames after the
/// conditioning window, and over the `t` frames after those.
pub fn recon_extrap_mse<P: Predictor + ?Sized>(predictor: &P, frames: &[Vec<f64>], t: usize) -> Result<(f64, f64)> {
    let w = predictor.window();
    if t == 0 {
        return Err(Error::invalid("the reconstruction span must be positive"));
    }
    if frames.len() < w + 2 * t {
        return Err(Error::InsufficientData(format!(
            "need {} frames for a window of {w} and span {t}, got {}",
            w + 2 * t,
            frames.len()
        )));
    }
    let context: Vec<&[f64]> = frames[..w].iter().map(Vec::as_slice).collect();
    let pred = predictor.predict(&context, 2 * t + 1, Direction::Forward)?;
    let errors = step_errors(&frames[w..w + 2 * t], &pred[1..])?;
    let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
    Ok((mean(&errors[..t]), mean(&errors[t..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDirection {
    Forward,
    Backward,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_traj: usize,
    pub horizon: usize,
    pub eps: f64,
    pub direction: EvalDirection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_traj: DEFAULT_N_TRAJ,
            horizon: DEFAULT_HORIZON,
            eps: DEFAULT_EPS,
            direction: EvalDirection::Both,
        }
    }
}

/// Scores of one evaluation trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub vpt_forward: Option<f64>,
    pub vpt_backward: Option<f64>,
    pub recon_mse: f64,
    pub extrap_mse: f64,
    pub forward_errors: Vec<f64>,
    pub backward_errors: Vec<f64>,
}

/// Averages over the evaluated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub vpt_forward: Option<f64>,
    /// Absent when not requested or not supported by the model.
    pub vpt_backward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward_unsupported: Option<String>,
    pub recon_mse: f64,
    pub extrap_mse: f64,
    /// Drift of the true energy along predicted state-space rollouts.
    pub energy_drift: Option<f64>,
    pub n_eval_trajectories: usize,
    pub horizon: usize,
    pub eps: f64,
}

/// Full evaluation output, including per-step errors for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub per_trajectory: Vec<TrajectoryMetrics>,
}

/// Scores one sequence of at least `horizon` frames.
pub fn evaluate_trajectory<P: Predictor + ?Sized>(predictor: &P, frames: &[Vec<f64>], config: &EvalConfig) -> Result<TrajectoryMetrics> {
    let w = predictor.window();
    let h = config.horizon;
    if h < w + 2 || frames.len() < h {
        return Err(Error::InsufficientData(format!(
            "horizon {h} needs at least {} frames and must exceed the window {w} by two",
            h
        )));
    }
    let frames = &frames[..h];
    let span = h - w + 1;
    let want_fwd = config.direction != EvalDirection::Backward;
    let want_bwd = config.direction != EvalDirection::Forward && predictor.supports_backward();

    let mut out = TrajectoryMetrics {
        vpt_forward: None,
        vpt_backward: None,
        recon_mse: f64::NAN,
        extrap_mse: f64::NAN,
        forward_errors: Vec::new(),
        backward_errors: Vec::new(),
    };
    if want_fwd {
        let context: Vec<&[f64]> = frames[..w].iter().map(Vec::as_slice).collect();
        let pred = predictor.predict(&context, span, Direction::Forward)?;
        out.forward_errors = step_errors(&frames[w - 1..], &pred)?;
        out.vpt_forward = Some(vpt_from_errors(&out.forward_errors, config.eps));
        let t = (h - w) / 2;
        let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
        out.recon_mse = mean(&out.forward_errors[1..=t]);
        out.extrap_mse = mean(&out.forward_errors[t + 1..=2 * t]);
    }
    if want_bwd {
        let context: Vec<&[f64]> = frames[h - w..].iter().map(Vec::as_slice).collect();
        let pred = predictor.predict(&context, span, Direction::Backward)?;
        let truth: Vec<&[f64]> = frames[w - 1..].iter().rev().map(Vec::as_slice).collect();
        out.backward_errors = step_errors(&truth, &pred)?;
        out.vpt_backward = Some(vpt_from_errors(&out.backward_errors, config.eps));
    }
    Ok(out)
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Evaluates the first `n_traj` sequences in parallel and averages.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, sequences: &[Vec<Vec<f64>>], config: &EvalConfig) -> Result<Evaluation> {
    if config.n_traj == 0 {
        return Err(Error::invalid("n_traj must be positive"));
    }
    if !(config.eps >= 0.0) {
        return Err(Error::invalid(format!("eps {} must be non-negative", config.eps)));
    }
    if sequences.len() < config.n_traj {
        return Err(Error::InsufficientData(format!(
            "{} evaluation trajectories requested, {} available",
            config.n_traj,
            sequences.len()
        )));
    }
    let per_trajectory = sequences[..config.n_traj]
        .par_iter()
        .map(|frames| evaluate_trajectory(predictor, frames, config))
        .collect::<Result<Vec<_>>>()?;

    let average = |f: &dyn Fn(&TrajectoryMetrics) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = per_trajectory.iter().map(f).collect();
        vals.map(|v| mean_of(v.into_iter()))
    };
    let backward_requested = config.direction != EvalDirection::Forward;
    let report = MetricReport {
        vpt_forward: average(&|m| m.vpt_forward),
        vpt_backward: average(&|m| m.vpt_backward),
        backward_unsupported: (backward_requested && !predictor.supports_backward())
            .then(|| "this model class cannot be rolled backward in time".to_string()),
        recon_mse: mean_of(per_trajectory.iter().map(|m| m.recon_mse)),
        extrap_mse: mean_of(per_trajectory.iter().map(|m| m.extrap_mse)),
        energy_drift: None,
        n_eval_trajectories: config.n_traj,
        horizon: config.horizon,
        eps: config.eps,
    };
    Ok(Evaluation { report, per_trajectory })
}

/// Evaluates a trained model on trajectories, adding the true-energy drift
/// of its forward rollouts when it predicts `(q, p)` directly.
pub fn evaluate_model(model: &TrainedModel, data: &[Trajectory], config: &EvalConfig) -> Result<Evaluation> {
    if config.n_traj > data.len() {
        return Err(Error::InsufficientData(format!(
            "{} evaluation trajectories requested, {} available",
            config.n_traj,
            data.len()
        )));
    }
    let class = model.dynamics.class;
    let sequences = data[..config.n_traj.min(data.len())]
        .iter()
        .map(|t| observations(t, model.mode, class))
        .collect::<Result<Vec<_>>>()?;
    let mut eval = evaluate(model, &sequences, config)?;

    let spec = &data[0].system;
    let phase_latent = model.mode == TrainMode::State && class != ModelClass::Lgn;
    if phase_latent && spec.kind.is_physical() && config.direction != EvalDirection::Backward {
        let drifts: Result<Vec<f64>> = data[..config.n_traj]
            .par_iter()
            .zip(&sequences)
            .map(|(traj, frames)| {
                let w = model.window;
                let context: Vec<&[f64]> = frames[..w].iter().map(Vec::as_slice).collect();
                let pred = model.predict(&context, config.horizon - w + 1, Direction::Forward)?;
                let states = pred.iter().map(|s| PhaseState::from_slice(s)).collect::<Result<Vec<_>>>()?;
                state_energy_drift(&states, &traj.system)
            })
            .collect();
        eval.report.energy_drift = drifts.ok().map(|d| mean_of(d.into_iter()));
    }
    Ok(eval)
}
