//! Latent-dynamics models, variational heads and training.
//!
//! A [`DynamicsModel`] advances a batch of latent states, one row per
//! sample. Training records rollouts on a [`Tape`]; evaluation rolls out
//! plain values with a fresh tape per step.

mod train;
mod vae;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{concat_cols, tril_len, Activation, MlpParams, MlpVars, Tape, Var};
use crate::error::{Error, Result};
use crate::integrate::{integrate_adaptive, step_explicit, step_leapfrog, IntegratorChoice, Scheme};
use crate::tensor::Tensor;

pub use train::{init_model, observations, train, TrainConfig, TrainLog, TrainMode, TrainOutcome, TrainedModel};
pub use vae::{decode_var, elbo_loss, elbo_terms, encode_var, gaussian_kl, ElboTerms, VaeHeads};

/// Ridge added to the learned mass matrix `F Fᵀ`.
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Hgn,
    Lgn,
    Node,
    NodeTr,
    Rgn,
    RgnRes,
}

impl ModelClass {
    pub const ALL: [ModelClass; 6] = [
        ModelClass::Hgn,
        ModelClass::Lgn,
        ModelClass::Node,
        ModelClass::NodeTr,
        ModelClass::Rgn,
        ModelClass::RgnRes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Hgn => "hgn",
            ModelClass::Lgn => "lgn",
            ModelClass::Node => "node",
            ModelClass::NodeTr => "node_tr",
            ModelClass::Rgn => "rgn",
            ModelClass::RgnRes => "rgn_res",
        }
    }

    /// Discrete recurrent updates with no time reversal.
    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelClass::Rgn | ModelClass::RgnRes)
    }

    /// Integrator used when none is configured.
    pub fn default_integrator(self) -> Option<IntegratorChoice> {
        match self {
            ModelClass::Hgn => Some(IntegratorChoice::new(Scheme::Leapfrog)),
            ModelClass::Lgn => Some(IntegratorChoice {
                max_steps: 10_000,
                ..IntegratorChoice::adaptive(1e-6, 1e-6)
            }),
            ModelClass::Node | ModelClass::NodeTr => Some(IntegratorChoice::new(Scheme::Rk2)),
            ModelClass::Rgn | ModelClass::RgnRes => None,
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model '{s}', expected hgn, lgn, node, node_tr, rgn or rgn_res")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Latent states of a rollout, the first being the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeq {
    pub states: Vec<Vec<f64>>,
    pub direction: Direction,
    pub dt: f64,
}

/// A learned vector field or update map over a `latent_dim` state.
///
/// Networks by class: HGN `[V(q), T(p)]`, LGN `[V(q), F(q)]`, all others
/// `[F(s)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub class: ModelClass,
    pub nets: Vec<MlpParams>,
    pub latent_dim: usize,
    pub integrator: Option<IntegratorChoice>,
    pub dt: f64,
    pub lambda: f64,
}

impl DynamicsModel {
    /// Randomly initialised swish networks with the given hidden widths.
    pub fn init<R: Rng + ?Sized>(class: ModelClass, latent_dim: usize, dt: f64, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if latent_dim == 0 || latent_dim % 2 != 0 {
            return Err(Error::invalid(format!("latent dimension {latent_dim} must be even and positive")));
        }
        let n = latent_dim / 2;
        let sizes = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
        };
        let shapes = match class {
            ModelClass::Hgn => vec![sizes(n, 1), sizes(n, 1)],
            ModelClass::Lgn => vec![sizes(n, 1), sizes(n, tril_len(n))],
            _ => vec![sizes(latent_dim, latent_dim)],
        };
        let nets = shapes
            .iter()
            .map(|s| MlpParams::init(s, Activation::Swish, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_nets(class, nets, latent_dim, dt)
    }

    /// Wraps existing networks, checking their shapes against the class.
    pub fn from_nets(class: ModelClass, nets: Vec<MlpParams>, latent_dim: usize, dt: f64) -> Result<Self> {
        let model = DynamicsModel {
            class,
            nets,
            latent_dim,
            integrator: class.default_integrator(),
            dt,
            lambda: DEFAULT_LAMBDA,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_integrator(mut self, integrator: IntegratorChoice) -> Result<Self> {
        self.integrator = Some(integrator);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.latent_dim;
        if d == 0 || d % 2 != 0 {
            return Err(Error::invalid(format!("latent dimension {d} must be even and positive")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step {} must be positive", self.dt)));
        }
        let n = d / 2;
        let expected: Vec<(usize, usize)> = match self.class {
            ModelClass::Hgn => vec![(n, 1), (n, 1)],
            ModelClass::Lgn => vec![(n, 1), (n, tril_len(n))],
            _ => vec![(d, d)],
        };
        let actual: Vec<(usize, usize)> = self.nets.iter().map(|m| (m.in_dim(), m.out_dim())).collect();
        if actual != expected {
            return Err(Error::invalid(format!(
                "{} with latent dimension {d} needs networks {expected:?}, got {actual:?}",
                self.class
            )));
        }
        let scheme = self.integrator.map(|i| i.scheme);
        let ok = match self.class {
            ModelClass::Hgn => scheme == Some(Scheme::Leapfrog),
            ModelClass::Lgn => scheme == Some(Scheme::DormandPrince),
            ModelClass::Node | ModelClass::NodeTr => matches!(
                scheme,
                Some(Scheme::Euler | Scheme::Rk2 | Scheme::Rk4 | Scheme::DormandPrince)
            ),
            ModelClass::Rgn | ModelClass::RgnRes => scheme.is_none(),
        };
        if !ok {
            return Err(Error::invalid(format!("{} cannot use integrator {scheme:?}", self.class)));
        }
        if let Some(i) = self.integrator {
            i.validate()?;
        }
        if self.class == ModelClass::Lgn && self.lambda <= 0.0 {
            return Err(Error::invalid("the mass-matrix ridge must be positive"));
        }
        Ok(())
    }

    /// `ṡ` for a batch of latent states recorded on `tape`.
    pub fn derivative_var<'t>(&self, tape: &'t Tape, nets: &[MlpVars<'t>], s: Var<'t>) -> Result<Var<'t>> {
        let n = self.latent_dim / 2;
        match self.class {
            ModelClass::Hgn => {
                let (q, p) = (s.cols(0, n), s.cols(n, n));
                let dv = tape.grad(nets[0].forward(q).sum(), &[q])?[0];
                let dt = tape.grad(nets[1].forward(p).sum(), &[p])?[0];
                Ok(concat_cols(dt, -dv))
            }
            ModelClass::Lgn => {
                let (q, qdot) = (s.cols(0, n), s.cols(n, n));
                let terms = crate::diffnet::lagrangian_terms(tape, &nets[1], &nets[0], self.lambda, q, qdot)?;
                Ok(concat_cols(qdot, terms.acceleration()?))
            }
            ModelClass::Node | ModelClass::NodeTr => Ok(nets[0].forward(s)),
            ModelClass::Rgn | ModelClass::RgnRes => Err(Error::Unsupported(format!(
                "{} is a discrete update map with no time derivative",
                self.class
            ))),
        }
    }

    /// `ṡ` at a single latent state.
    pub fn latent_derivative(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_len(s.len())?;
        let tape = Tape::new();
        let nets: Vec<_> = self.nets.iter().map(|m| m.on_tape(&tape)).collect();
        let x = tape.leaf(Tensor::row_vector(s.to_vec()));
        Ok(self.derivative_var(&tape, &nets, x)?.value().data().to_vec())
    }

    /// One update of a batch of latent states by `±dt`.
    pub fn step_var<'t>(&self, tape: &'t Tape, nets: &[MlpVars<'t>], s: Var<'t>, direction: Direction) -> Result<Var<'t>> {
        if self.class.is_recurrent() && direction == Direction::Backward {
            return Err(Error::Unsupported(format!(
                "{} cannot be rolled backward in time",
                self.class
            )));
        }
        let h = match direction {
            Direction::Forward => self.dt,
            Direction::Backward => -self.dt,
        };
        let n = self.latent_dim / 2;
        match self.class {
            ModelClass::Rgn => Ok(nets[0].forward(s)),
            ModelClass::RgnRes => Ok(s + nets[0].forward(s)),
            ModelClass::Hgn => {
                let (q, p) = step_leapfrog(
                    |q: &Var<'t>| Ok(tape.grad(nets[0].forward(*q).sum(), &[*q])?[0]),
                    |p: &Var<'t>| Ok(tape.grad(nets[1].forward(*p).sum(), &[*p])?[0]),
                    &s.cols(0, n),
                    &s.cols(n, n),
                    h,
                )?;
                Ok(concat_cols(q, p))
            }
            ModelClass::Lgn | ModelClass::Node | ModelClass::NodeTr => {
                let integrator = self.integrator.expect("continuous models carry an integrator");
                let field = |x: &Var<'t>| self.derivative_var(tape, nets, *x);
                match integrator.scheme {
                    Scheme::DormandPrince => integrate_adaptive(field, &s, (0.0, h), integrator.tolerance()),
                    scheme => step_explicit(field, &s, h, scheme),
                }
            }
        }
    }

    /// Records `n_steps` updates starting at `s0`; the result includes `s0`.
    pub fn rollout_var<'t>(
        &self,
        tape: &'t Tape,
        nets: &[MlpVars<'t>],
        s0: Var<'t>,
        n_steps: usize,
        direction: Direction,
    ) -> Result<Vec<Var<'t>>> {
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(s0);
        for _ in 0..n_steps {
            let next = self.step_var(tape, nets, *out.last().unwrap(), direction)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Rolls a batch (one state per row) forward or backward by value.
    pub fn rollout_batch(&self, s0: &Tensor, n_steps: usize, direction: Direction) -> Result<Vec<Tensor>> {
        self.check_len(s0.cols())?;
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(s0.clone());
        for k in 0..n_steps {
            let tape = Tape::new();
            let nets: Vec<_> = self.nets.iter().map(|m| m.on_tape(&tape)).collect();
            let s = tape.leaf(out[k].clone());
            let next = (*self.step_var(&tape, &nets, s, direction)?.value()).clone();
            if !next.is_finite() {
                return Err(Error::Numeric(format!("rollout produced a non-finite state at step {}", k + 1)));
            }
            out.push(next);
        }
        Ok(out)
    }

    pub fn rollout(&self, s0: &[f64], n_steps: usize, direction: Direction) -> Result<LatentSeq> {
        let states = self
            .rollout_batch(&Tensor::row_vector(s0.to_vec()), n_steps, direction)?
            .into_iter()
            .map(Tensor::into_data)
            .collect();
        Ok(LatentSeq {
            states,
            direction,
            dt: self.dt,
        })
    }

    /// Learned energy `V(q) + T(p)` of an HGN.
    pub fn hamiltonian(&self, s: &[f64]) -> Result<f64> {
        if self.class != ModelClass::Hgn {
            return Err(Error::Unsupported(format!("{} has no Hamiltonian", self.class)));
        }
        self.check_len(s.len())?;
        let n = self.latent_dim / 2;
        Ok(self.nets[0].forward(&s[..n])?[0] + self.nets[1].forward(&s[n..])?[0])
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.latent_dim {
            return Err(Error::LengthMismatch {
                expected: self.latent_dim,
                actual: len,
            });
        }
        Ok(())
    }
}
