//! The DYNB trajectory record.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DYNB"  version  n_steps  state_dim  H  W  C      (u32 each after the magic)
//! states        n_steps * state_dim      f32
//! derivs        n_steps * state_dim      f32
//! observations  n_steps * H * W * C      f32
//! ```
//!
//! State-only records have `H = W = C = 0`.

use std::path::Path;

use dynsuite_core::systems::{Image, PhaseState, SystemSpec, Trajectory};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"DYNB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 6 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub n_steps: usize,
    pub state_dim: usize,
    pub obs_shape: (usize, usize, usize),
    pub states: Vec<f32>,
    pub derivs: Vec<f32>,
    pub observations: Vec<f32>,
}

fn flatten(states: &[PhaseState]) -> Vec<f32> {
    states
        .iter()
        .flat_map(|s| s.q.iter().chain(&s.p).map(|&v| v as f32))
        .collect()
}

fn unflatten(data: &[f32], dim: usize) -> Vec<PhaseState> {
    data.chunks(dim)
        .map(|row| {
            let (q, p) = row.split_at(dim / 2);
            PhaseState::new(q.iter().map(|&v| v as f64).collect(), p.iter().map(|&v| v as f64).collect())
        })
        .collect()
}

impl Record {
    /// Truncates a trajectory to 32-bit storage.
    pub fn from_trajectory(traj: &Trajectory) -> Record {
        let state_dim = traj.states.first().map_or(0, |s| 2 * s.dim());
        let (obs_shape, observations) = match &traj.observations {
            Some(frames) => (
                frames.first().map_or((0, 0, 0), Image::shape),
                frames.iter().flat_map(|f| f.data.iter().map(|&v| v as f32)).collect(),
            ),
            None => ((0, 0, 0), Vec::new()),
        };
        Record {
            n_steps: traj.len(),
            state_dim,
            obs_shape,
            states: flatten(&traj.states),
            derivs: flatten(&traj.derivs),
            observations,
        }
    }

    pub fn has_observations(&self) -> bool {
        self.obs_shape != (0, 0, 0)
    }

    pub fn to_trajectory(&self, system: SystemSpec, dt: f64) -> Trajectory {
        let observations = self.has_observations().then(|| {
            let (h, w, c) = self.obs_shape;
            self.observations
                .chunks(h * w * c)
                .map(|f| Image {
                    height: h,
                    width: w,
                    channels: c,
                    data: f.iter().map(|&v| v as f64).collect(),
                })
                .collect()
        });
        Trajectory {
            dt,
            states: unflatten(&self.states, self.state_dim),
            derivs: unflatten(&self.derivs, self.state_dim),
            observations,
            system,
        }
    }

    fn obs_len(&self) -> usize {
        let (h, w, c) = self.obs_shape;
        self.n_steps * h * w * c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let floats = self.states.len() + self.derivs.len() + self.observations.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
        out.extend_from_slice(MAGIC);
        let (h, w, c) = self.obs_shape;
        for v in [VERSION as usize, self.n_steps, self.state_dim, h, w, c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.states.iter().chain(&self.derivs).chain(&self.observations) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Record, CliError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(CliError::Format("not a DYNB record".into()));
        }
        let field = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
        let version = field(0) as u32;
        if version != VERSION {
            return Err(CliError::Format(format!("DYNB version {version} is not supported")));
        }
        let (n_steps, state_dim) = (field(1), field(2));
        let obs_shape = (field(3), field(4), field(5));
        if state_dim % 2 != 0 {
            return Err(CliError::Format(format!("odd state dimension {state_dim}")));
        }
        let states_len = n_steps * state_dim;
        let obs_len = n_steps * obs_shape.0 * obs_shape.1 * obs_shape.2;
        let expected = HEADER_LEN + 4 * (2 * states_len + obs_len);
        if bytes.len() != expected {
            return Err(CliError::Format(format!(
                "record is {} bytes but its header implies {expected}",
                bytes.len()
            )));
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let record = Record {
            n_steps,
            state_dim,
            obs_shape,
            states: floats[..states_len].to_vec(),
            derivs: floats[states_len..2 * states_len].to_vec(),
            observations: floats[2 * states_len..].to_vec(),
        };
        debug_assert_eq!(record.observations.len(), record.obs_len());
        Ok(record)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Record, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Record::from_bytes(&bytes).map_err(|e| match e {
            CliError::Format(msg) => CliError::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynsuite_core::systems::{generate_trajectory, SystemKind};

    #[test]
    fn round_trip_is_exact() {
        let spec = SystemSpec::new(SystemKind::Pendulum);
        let traj = generate_trajectory(&spec, 1, 0, 12, 0.05, Some((8, 8))).unwrap();
        let rec = Record::from_trajectory(&traj);
        assert_eq!((rec.n_steps, rec.state_dim, rec.obs_shape), (12, 2, (8, 8, 1)));
        let bytes = rec.to_bytes();
        assert_eq!(bytes.len(), 28 + 4 * (2 * 12 * 2 + 12 * 64));
        let back = Record::from_bytes(&bytes).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_bytes(), bytes);
        let again = Record::from_trajectory(&back.to_trajectory(spec, 0.05));
        assert_eq!(again.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_within_single_precision() {
        let spec = SystemSpec::new(SystemKind::TwoBody);
        let traj = generate_trajectory(&spec, 4, 2, 20, 0.05, None).unwrap();
        let back = Record::from_trajectory(&traj).to_trajectory(spec, 0.05);
        for (a, b) in traj.states.iter().zip(&back.states) {
            for (x, y) in a.to_vec().iter().zip(b.to_vec()) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-30));
            }
        }
        assert!(back.observations.is_none());
    }

    #[test]
    fn rejects_bad_lengths_and_magic() {
        let spec = SystemSpec::new(SystemKind::MassSpring);
        let traj = generate_trajectory(&spec, 0, 0, 4, 0.05, None).unwrap();
        let mut bytes = Record::from_trajectory(&traj).to_bytes();
        bytes.push(0);
        assert!(Record::from_bytes(&bytes).is_err());
        bytes.pop();
        bytes[0] = b'X';
        assert!(Record::from_bytes(&bytes).is_err());
        assert!(Record::from_bytes(b"DYN").is_err());
    }
}
