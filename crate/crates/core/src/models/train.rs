//! Minibatch training in state space or pixel space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::vae::{elbo_terms, VaeHeads};
use super::{Direction, DynamicsModel, ModelClass, DEFAULT_LAMBDA};
use crate::diffnet::{clip_global_norm, grad_params, AdamState, MlpParams, Tape, Var};
use crate::error::{Error, Result};
use crate::integrate::IntegratorChoice;
use crate::systems::Trajectory;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// The latent state is the true phase state.
    State,
    /// Full encoder, dynamics and decoder over rendered frames.
    Pixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub class: ModelClass,
    pub mode: TrainMode,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta: f64,
    pub seed: u64,
    /// Conditioning frames `W`.
    pub window: usize,
    /// Rolled-out target frames `T`.
    pub horizon: usize,
    pub hidden: usize,
    /// Hidden layers per network.
    pub depth: usize,
    pub lambda: f64,
    pub clip: f64,
    /// Pixel-mode latent size; twice the phase-space size when absent.
    pub latent_dim: Option<usize>,
    pub integrator: Option<IntegratorChoice>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            class: ModelClass::Hgn,
            mode: TrainMode::State,
            steps: 2000,
            batch: 32,
            lr: 5e-4,
            beta: 1e-3,
            seed: 0,
            window: 5,
            horizon: 20,
            hidden: 64,
            depth: 3,
            lambda: DEFAULT_LAMBDA,
            clip: 10.0,
            latent_dim: None,
            integrator: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.window == 0 || self.horizon == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch, window, horizon and hidden width must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta {} must be non-negative", self.beta)));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("gradient clip must be positive"));
        }
        if self.class == ModelClass::NodeTr && self.window < 2 {
            return Err(Error::invalid("node_tr reconstructs the conditioning window and needs a window of at least 2"));
        }
        if self.mode == TrainMode::State && self.latent_dim.is_some() {
            return Err(Error::invalid("state mode fixes the latent size to the phase-space size"));
        }
        Ok(())
    }

    fn hidden_sizes(&self) -> Vec<usize> {
        vec![self.hidden; self.depth]
    }
}

/// Dynamics plus, in pixel mode, the variational heads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub dynamics: DynamicsModel,
    pub heads: Option<VaeHeads>,
    pub mode: TrainMode,
    pub window: usize,
}

impl TrainedModel {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        match (&self.heads, self.mode) {
            (None, TrainMode::State) => Ok(()),
            (Some(h), TrainMode::Pixel) => {
                h.validate()?;
                if h.latent_dim() != self.dynamics.latent_dim || h.window != self.window {
                    return Err(Error::invalid("heads disagree with the dynamics latent size or window"));
                }
                Ok(())
            }
            _ => Err(Error::invalid("pixel mode needs heads and state mode must not have them")),
        }
    }

    fn nets(&self) -> Vec<&MlpParams> {
        let mut nets: Vec<&MlpParams> = self.dynamics.nets.iter().collect();
        if let Some(h) = &self.heads {
            nets.push(&h.encoder);
            nets.push(&h.decoder);
        }
        nets
    }

    fn with_nets(&self, mut nets: Vec<MlpParams>) -> TrainedModel {
        let mut out = self.clone();
        if let Some(h) = &mut out.heads {
            h.decoder = nets.pop().expect("decoder");
            h.encoder = nets.pop().expect("encoder");
        }
        out.dynamics.nets = nets;
        out
    }

    /// Deterministic latent state aligned with the last context frame.
    pub fn infer(&self, context: &[&[f64]]) -> Result<Vec<f64>> {
        if context.len() != self.window {
            return Err(Error::LengthMismatch {
                expected: self.window,
                actual: context.len(),
            });
        }
        match &self.heads {
            None => {
                let s = context[self.window - 1];
                if s.len() != self.dynamics.latent_dim {
                    return Err(Error::LengthMismatch {
                        expected: self.dynamics.latent_dim,
                        actual: s.len(),
                    });
                }
                Ok(s.to_vec())
            }
            Some(h) => Ok(h.encode_with_noise(context, &vec![0.0; h.latent_dim()])?.1),
        }
    }

    /// Observation implied by a latent state.
    pub fn observe(&self, s: &[f64]) -> Result<Vec<f64>> {
        match &self.heads {
            None => Ok(s.to_vec()),
            Some(h) => h.decode(&s[..self.dynamics.latent_dim / 2]),
        }
    }

    /// `n_frames` predicted observations, starting at the frame aligned with
    /// the last element of `context` and moving in `direction`.
    ///
    /// A rollout that breaks down numerically is padded with NaN frames.
    pub fn predict(&self, context: &[&[f64]], n_frames: usize, direction: Direction) -> Result<Vec<Vec<f64>>> {
        if n_frames == 0 {
            return Ok(Vec::new());
        }
        let mut s = self.infer(context)?;
        let mut out = Vec::with_capacity(n_frames);
        out.push(self.observe(&s)?);
        while out.len() < n_frames {
            match self.dynamics.rollout(&s, 1, direction) {
                Ok(mut seq) => {
                    s = seq.states.pop().expect("one step");
                    out.push(self.observe(&s)?);
                }
                Err(Error::Numeric(_) | Error::Singularity(_) | Error::Divergence { .. }) => {
                    let width = out[0].len();
                    out.resize(n_frames, vec![f64::NAN; width]);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// Per-step training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub loss: Vec<f64>,
    pub recon: Vec<f64>,
    pub kl: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: TrainLog,
}

/// Per-frame training targets of a trajectory.
///
/// State mode uses `(q, p)`, except LGN, whose latent second half is the
/// velocity `dq/dt`. Pixel mode uses the flattened rendered frames.
pub fn observations(traj: &Trajectory, mode: TrainMode, class: ModelClass) -> Result<Vec<Vec<f64>>> {
    match mode {
        TrainMode::State => Ok(traj
            .states
            .iter()
            .zip(&traj.derivs)
            .map(|(s, d)| {
                let second = if class == ModelClass::Lgn { &d.q } else { &s.p };
                s.q.iter().chain(second).copied().collect()
            })
            .collect()),
        TrainMode::Pixel => {
            let frames = traj.observations.as_ref().ok_or_else(|| {
                Error::invalid("pixel mode needs rendered observations; this dataset is state-only")
            })?;
            Ok(frames.iter().map(|f| f.data.clone()).collect())
        }
    }
}

/// Fresh model for `config`, drawing from `rng`.
fn init_with<R: Rng + ?Sized>(
    config: &TrainConfig,
    state_dim: usize,
    obs_shape: Option<(usize, usize, usize)>,
    dt: f64,
    rng: &mut R,
) -> Result<TrainedModel> {
    config.validate()?;
    let hidden = config.hidden_sizes();
    let latent = match config.mode {
        TrainMode::State => state_dim,
        TrainMode::Pixel => config.latent_dim.unwrap_or(2 * state_dim),
    };
    let mut dynamics = DynamicsModel::init(config.class, latent, dt, &hidden, rng)?;
    dynamics.lambda = config.lambda;
    if let Some(i) = config.integrator {
        dynamics = dynamics.with_integrator(i)?;
    }
    dynamics.validate()?;
    let heads = match config.mode {
        TrainMode::State => None,
        TrainMode::Pixel => {
            let shape = obs_shape.ok_or_else(|| Error::invalid("pixel mode needs an observation shape"))?;
            Some(VaeHeads::init(latent, config.window, shape, &hidden, config.beta, rng)?)
        }
    };
    Ok(TrainedModel {
        dynamics,
        heads,
        mode: config.mode,
        window: config.window,
    })
}

/// The model `train` starts from for the same config and data shape.
pub fn init_model(
    config: &TrainConfig,
    state_dim: usize,
    obs_shape: Option<(usize, usize, usize)>,
    dt: f64,
) -> Result<TrainedModel> {
    init_with(config, state_dim, obs_shape, dt, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

struct Batch {
    /// `W + T` tensors of shape `B x P`.
    frames: Vec<Tensor>,
    noise: Tensor,
}

fn draw_batch(data: &[Vec<Vec<f64>>], config: &TrainConfig, latent: usize, rng: &mut ChaCha8Rng) -> Batch {
    let len = config.window + config.horizon;
    let width = data[0][0].len();
    let mut frames = vec![Tensor::zeros(config.batch, width); len];
    for r in 0..config.batch {
        let traj = &data[rng.random_range(0..data.len())];
        let start = rng.random_range(0..=traj.len() - len);
        for (k, frame) in frames.iter_mut().enumerate() {
            frame.data_mut()[r * width..(r + 1) * width].copy_from_slice(&traj[start + k]);
        }
    }
    let noise = if config.mode == TrainMode::Pixel {
        let draws = (0..config.batch * latent).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::from_vec(config.batch, latent, draws).expect("noise shape")
    } else {
        Tensor::zeros(0, 0)
    };
    Batch { frames, noise }
}

fn mean_sq<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    let d = a - b;
    (d * d).mean()
}

/// Multi-step state-space error from the true state at frame `W - 1`.
fn state_loss<'t>(tape: &'t Tape, model: &DynamicsModel, nets: &[crate::diffnet::MlpVars<'t>], window: usize, frames: &[Tensor]) -> Result<Var<'t>> {
    let s0 = tape.leaf(frames[window - 1].clone());
    let horizon = frames.len() - window;
    let states = model.rollout_var(tape, nets, s0, horizon, Direction::Forward)?;
    let mut loss: Option<Var<'t>> = None;
    for (t, s) in states.iter().enumerate().skip(1) {
        let err = mean_sq(*s, tape.leaf(frames[window - 1 + t].clone()));
        loss = Some(loss.map_or(err, |l| l + err));
    }
    let mut loss = loss.expect("positive horizon").scale(1.0 / horizon as f64);
    if model.class == ModelClass::NodeTr && window > 1 {
        let back = model.rollout_var(tape, nets, s0, window - 1, Direction::Backward)?;
        let mut total: Option<Var<'t>> = None;
        for (k, s) in back.iter().enumerate().skip(1) {
            let err = mean_sq(*s, tape.leaf(frames[window - 1 - k].clone()));
            total = Some(total.map_or(err, |l| l + err));
        }
        loss = loss + total.expect("window above one").scale(1.0 / (window - 1) as f64);
    }
    Ok(loss)
}

/// Trains a model on `data` with Adam, deterministically for a given seed.
pub fn train(config: &TrainConfig, data: &[Trajectory]) -> Result<TrainOutcome> {
    config.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::InsufficientData("training needs at least one trajectory".into()))?;
    let need = config.window + config.horizon;
    if let Some(short) = data.iter().find(|t| t.len() < need) {
        return Err(Error::InsufficientData(format!(
            "trajectories must have at least {need} steps, found {}",
            short.len()
        )));
    }
    let state_dim = first.states[0].q.len() * 2;
    let obs_shape = first.observations.as_ref().and_then(|o| o.first()).map(|f| f.shape());
    if config.mode == TrainMode::Pixel && obs_shape.is_none() {
        return Err(Error::invalid("pixel mode needs rendered observations; this dataset is state-only"));
    }
    let prepared = data
        .iter()
        .map(|t| observations(t, config.mode, config.class))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_with(config, state_dim, obs_shape, first.dt, &mut rng)?;
    let latent = model.dynamics.latent_dim;
    let initial: Vec<Tensor> = model.nets().iter().flat_map(|n| n.tensors()).map(|t| (*t).clone()).collect();
    let mut adam = AdamState::new(config.lr, &initial.iter().collect::<Vec<_>>());
    let mut log = TrainLog::default();

    for step in 0..config.steps {
        let batch = draw_batch(&prepared, config, latent, &mut rng);
        let nets = model.nets();
        let mut parts = (0.0, 0.0);
        let result = grad_params(&nets, |tape, vars| {
            let n_dyn = model.dynamics.nets.len();
            match &model.heads {
                None => {
                    let loss = state_loss(tape, &model.dynamics, &vars[..n_dyn], model.window, &batch.frames)?;
                    parts = (loss.value().item(), 0.0);
                    Ok(loss)
                }
                Some(heads) => {
                    let terms = elbo_terms(
                        tape,
                        &model.dynamics,
                        &vars[..n_dyn],
                        heads,
                        &vars[n_dyn],
                        &vars[n_dyn + 1],
                        &batch.frames,
                        batch.noise.clone(),
                    )?;
                    parts = (terms.recon.value().item(), terms.kl.value().item());
                    Ok(terms.loss)
                }
            }
        });
        let (loss, grouped) = result.map_err(|e| Error::Training {
            step,
            reason: e.to_string(),
        })?;
        let mut grads: Vec<Tensor> = grouped.into_iter().flatten().collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                step,
                reason: "non-finite gradient".into(),
            });
        }
        clip_global_norm(&mut grads, config.clip);
        let params: Vec<std::sync::Arc<Tensor>> = nets.iter().flat_map(|n| n.tensors()).collect();
        let refs: Vec<&Tensor> = params.iter().map(|t| t.as_ref()).collect();
        let mut updated = adam.step(&refs, &grads)?.into_iter();
        let new_nets = nets
            .iter()
            .map(|n| {
                let count = n.tensors().len();
                n.with_tensors(updated.by_ref().take(count).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        model = model.with_nets(new_nets);
        log.loss.push(loss);
        log.recon.push(parts.0);
        log.kl.push(parts.1);
    }
    Ok(TrainOutcome { model, log })
}
