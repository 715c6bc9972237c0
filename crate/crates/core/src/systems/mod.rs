//! Ground-truth dynamical systems.
//!
//! A [`SystemSpec`] names a system and its hyperparameters. Missing
//! parameters fall back to per-kind defaults, so `SystemSpec::new(kind)` is
//! always usable as is.

pub mod camera;
pub mod lj;
pub mod render;
pub mod replicator;
mod sample;
mod simulate;
pub mod toy;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use camera::{camera_state, CameraMode, CameraState};
pub use lj::{lj_pair, minimal_image};
pub use render::{render, render_discs, Disc, Image};
pub use sample::{sample_initial, trajectory_seed};
pub use simulate::{default_method, generate_trajectory, simulate, Trajectory};

/// Friction coefficient used by the `+friction` dataset variants.
pub const DEFAULT_FRICTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    MassSpring,
    Pendulum,
    DoublePendulum,
    TwoBody,
    MatchingPennies,
    RockPaperScissors,
    LennardJones,
    CameraCircle,
    CameraSpiral,
}

impl SystemKind {
    pub const ALL: [SystemKind; 9] = [
        SystemKind::MassSpring,
        SystemKind::Pendulum,
        SystemKind::DoublePendulum,
        SystemKind::TwoBody,
        SystemKind::MatchingPennies,
        SystemKind::RockPaperScissors,
        SystemKind::LennardJones,
        SystemKind::CameraCircle,
        SystemKind::CameraSpiral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::MassSpring => "mass_spring",
            SystemKind::Pendulum => "pendulum",
            SystemKind::DoublePendulum => "double_pendulum",
            SystemKind::TwoBody => "two_body",
            SystemKind::MatchingPennies => "matching_pennies",
            SystemKind::RockPaperScissors => "rock_paper_scissors",
            SystemKind::LennardJones => "lennard_jones",
            SystemKind::CameraCircle => "camera_circle",
            SystemKind::CameraSpiral => "camera_spiral",
        }
    }

    /// Systems with an energy function.
    pub fn is_physical(self) -> bool {
        matches!(
            self,
            SystemKind::MassSpring
                | SystemKind::Pendulum
                | SystemKind::DoublePendulum
                | SystemKind::TwoBody
                | SystemKind::LennardJones
        )
    }

    pub fn is_game(self) -> bool {
        matches!(self, SystemKind::MatchingPennies | SystemKind::RockPaperScissors)
    }

    pub fn is_camera(self) -> bool {
        matches!(self, SystemKind::CameraCircle | SystemKind::CameraSpiral)
    }

    pub fn supports_friction(self) -> bool {
        matches!(self, SystemKind::MassSpring | SystemKind::Pendulum | SystemKind::DoublePendulum)
    }

    pub fn supports_colour(self) -> bool {
        matches!(
            self,
            SystemKind::MassSpring | SystemKind::Pendulum | SystemKind::DoublePendulum | SystemKind::TwoBody
        )
    }

    /// Sampling interval used when none is given.
    pub fn default_dt(self) -> f64 {
        match self {
            SystemKind::LennardJones => 0.01,
            SystemKind::CameraCircle | SystemKind::CameraSpiral => 0.1,
            _ => 0.05,
        }
    }

    /// Default hyperparameters. Lennard-Jones temperature and density depend
    /// on the particle count and are resolved in [`SystemSpec::param`].
    pub fn default_params(self) -> BTreeMap<String, f64> {
        self.default_pairs().iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn default_pairs(self) -> &'static [(&'static str, f64)] {
        match self {
            SystemKind::MassSpring => &[("k", 2.0), ("m", 0.5)],
            SystemKind::Pendulum => &[("m", 0.5), ("g", 3.0), ("l", 1.0)],
            SystemKind::DoublePendulum => &[("m1", 0.5), ("m2", 0.5), ("l1", 1.0), ("l2", 1.0), ("g", 3.0)],
            SystemKind::TwoBody => &[("g", 1.0), ("m1", 1.0), ("m2", 1.0)],
            SystemKind::MatchingPennies => &[("a00", 1.0), ("a01", -1.0), ("a10", -1.0), ("a11", 1.0)],
            SystemKind::RockPaperScissors => &[
                ("a00", 0.0),
                ("a01", -1.0),
                ("a02", 1.0),
                ("a10", 1.0),
                ("a11", 0.0),
                ("a12", -1.0),
                ("a20", -1.0),
                ("a21", 1.0),
                ("a22", 0.0),
            ],
            SystemKind::LennardJones => &[("n", 4.0), ("epsilon", 1.0), ("sigma", 1.0), ("m", 1.0)],
            SystemKind::CameraCircle => &[("a", 0.5), ("theta0", 0.0)],
            SystemKind::CameraSpiral => &[("a", 0.3), ("theta0", 0.0)],
        }
    }

    fn optional_params(self) -> &'static [&'static str] {
        match self {
            SystemKind::LennardJones => &["temperature", "density", "box_length"],
            _ => &[],
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SystemKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!("unknown system '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Parameters only meaningful in colour mode.
const COLOUR_PARAMS: [&str; 3] = ["hue", "offset_x", "offset_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub friction_lambda: f64,
    #[serde(default)]
    pub colour_mode: bool,
}

impl SystemSpec {
    pub fn new(kind: SystemKind) -> Self {
        SystemSpec {
            kind,
            params: BTreeMap::new(),
            friction_lambda: 0.0,
            colour_mode: false,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_friction(mut self, lambda: f64) -> Self {
        self.friction_lambda = lambda;
        self
    }

    pub fn with_colour(mut self, on: bool) -> Self {
        self.colour_mode = on;
        self
    }

    /// Parameter value, falling back to the kind's default.
    ///
    /// Panics on a name the kind does not define; [`Self::validate`] rejects
    /// such specs up front.
    pub fn param(&self, name: &str) -> f64 {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        if let Some(&(_, v)) = self.kind.default_pairs().iter().find(|(k, _)| *k == name) {
            return v;
        }
        match (self.kind, name) {
            (SystemKind::LennardJones, "temperature") => lj::default_state(self.particle_count()).0,
            (SystemKind::LennardJones, "density") => lj::default_state(self.particle_count()).1,
            (SystemKind::LennardJones, "box_length") => (self.param("n") / self.param("density")).sqrt(),
            (_, "hue") => 0.0,
            (_, "offset_x") | (_, "offset_y") => 0.0,
            _ => panic!("{} has no parameter '{name}'", self.kind),
        }
    }

    pub(crate) fn particle_count(&self) -> usize {
        self.params.get("n").copied().unwrap_or(4.0) as usize
    }

    /// Payoff matrix of a cyclic game, row-major.
    pub fn payoff(&self) -> Result<(usize, Vec<f64>)> {
        let n = match self.kind {
            SystemKind::MatchingPennies => 2,
            SystemKind::RockPaperScissors => 3,
            other => return Err(Error::Unsupported(format!("{other} has no payoff matrix"))),
        };
        let a = (0..n * n).map(|k| self.param(&format!("a{}{}", k / n, k % n))).collect();
        Ok((n, a))
    }

    /// Configuration-space dimension `n`; states have `2n` entries.
    pub fn config_dim(&self) -> usize {
        match self.kind {
            SystemKind::MassSpring | SystemKind::Pendulum => 1,
            SystemKind::DoublePendulum => 2,
            SystemKind::TwoBody => 4,
            SystemKind::MatchingPennies => 4,
            SystemKind::RockPaperScissors => 6,
            SystemKind::LennardJones => 2 * self.particle_count(),
            SystemKind::CameraCircle | SystemKind::CameraSpiral => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in &self.params {
            let known = self.kind.default_pairs().iter().any(|(k, _)| k == name)
                || self.kind.optional_params().contains(&name.as_str())
                || (self.colour_mode && COLOUR_PARAMS.contains(&name.as_str()));
            if !known {
                return Err(Error::invalid(format!("{} has no parameter '{name}'", self.kind)));
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!("parameter '{name}' is {value}")));
            }
        }
        if !(self.friction_lambda >= 0.0 && self.friction_lambda.is_finite()) {
            return Err(Error::invalid("friction must be finite and non-negative"));
        }
        if self.friction_lambda > 0.0 && !self.kind.supports_friction() {
            return Err(Error::invalid(format!(
                "friction is only defined for mass_spring, pendulum and double_pendulum, not {}",
                self.kind
            )));
        }
        if self.colour_mode && !self.kind.supports_colour() {
            return Err(Error::invalid(format!("colour mode is not defined for {}", self.kind)));
        }
        let positive: &[&str] = match self.kind {
            SystemKind::MassSpring => &["k", "m"],
            SystemKind::Pendulum => &["m", "g", "l"],
            SystemKind::DoublePendulum => &["m1", "m2", "l1", "l2", "g"],
            SystemKind::TwoBody => &["g", "m1", "m2"],
            SystemKind::LennardJones => &["epsilon", "sigma", "m", "temperature", "density", "box_length"],
            _ => &[],
        };
        for name in positive {
            if self.param(name) <= 0.0 {
                return Err(Error::invalid(format!("parameter '{name}' must be positive")));
            }
        }
        match self.kind {
            SystemKind::LennardJones => {
                let n = self.param("n");
                if n != 4.0 && n != 16.0 {
                    return Err(Error::invalid(format!("Lennard-Jones supports 4 or 16 particles, got {n}")));
                }
            }
            SystemKind::CameraCircle | SystemKind::CameraSpiral => {
                let max = if self.kind == SystemKind::CameraCircle { 0.9 } else { 0.6 };
                let a = self.param("a");
                if !(0.0..=max).contains(&a) {
                    return Err(Error::invalid(format!("camera radius {a} outside [0, {max}]")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, s: &PhaseState) -> Result<()> {
        let n = self.config_dim();
        if s.q.len() != n || s.p.len() != n {
            return Err(Error::invalid(format!(
                "{} expects q and p of length {n}, got {} and {}",
                self.kind,
                s.q.len(),
                s.p.len()
            )));
        }
        Ok(())
    }
}

/// Phase-space point `(q, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        PhaseState { q, p }
    }

    /// `q` followed by `p`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.q.len() + self.p.len());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v
    }

    /// Splits an even-length vector into halves.
    pub fn from_slice(s: &[f64]) -> Result<Self> {
        if s.len() % 2 != 0 {
            return Err(Error::invalid(format!("state length {} is odd", s.len())));
        }
        let (q, p) = s.split_at(s.len() / 2);
        Ok(PhaseState::new(q.to_vec(), p.to_vec()))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Total energy `H(q, p)`.
pub fn energy(spec: &SystemSpec, s: &PhaseState) -> Result<f64> {
    spec.check_state(s)?;
    match spec.kind {
        SystemKind::MassSpring | SystemKind::Pendulum | SystemKind::DoublePendulum | SystemKind::TwoBody => {
            toy::energy(spec, &s.q, &s.p)
        }
        SystemKind::LennardJones => lj::energy(spec, &s.q, &s.p),
        other => Err(Error::Unsupported(format!("{other} has no energy function"))),
    }
}

/// Time derivative `(dq/dt, dp/dt)` of the state.
pub fn vector_field(spec: &SystemSpec, s: &PhaseState) -> Result<PhaseState> {
    spec.check_state(s)?;
    match spec.kind {
        SystemKind::MassSpring | SystemKind::Pendulum | SystemKind::DoublePendulum | SystemKind::TwoBody => {
            let (dh_dq, dh_dp) = toy::grad_h(spec, &s.q, &s.p)?;
            let lambda = spec.friction_lambda;
            let dp = dh_dq.iter().zip(&dh_dp).map(|(gq, gp)| -gq - lambda * gp).collect();
            Ok(PhaseState::new(dh_dp, dp))
        }
        SystemKind::LennardJones => {
            let m = spec.param("m");
            let dq = s.p.iter().map(|p| p / m).collect();
            Ok(PhaseState::new(dq, lj::forces(spec, &s.q)?))
        }
        SystemKind::MatchingPennies | SystemKind::RockPaperScissors => replicator::vector_field(spec, &s.q),
        other => Err(Error::Unsupported(format!("{other} is a prescribed path, not an ODE system"))),
    }
}
