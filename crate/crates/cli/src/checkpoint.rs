//! Model checkpoints.
//!
//! `"DYNC"`, a u32 LE version, a u32 LE header length, a JSON header
//! describing the networks, then every parameter tensor as f64 LE in
//! header order (each network's `w0, b0, w1, b1, ...`).

use std::path::Path;

use dynsuite_core::diffnet::{Activation, MlpParams};
use dynsuite_core::integrate::IntegratorChoice;
use dynsuite_core::models::{DynamicsModel, ModelClass, TrainConfig, TrainMode, TrainedModel, VaeHeads};
use dynsuite_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"DYNC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetHeader {
    sizes: Vec<usize>,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadsHeader {
    beta: f64,
    obs_shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    class: ModelClass,
    mode: TrainMode,
    window: usize,
    latent_dim: usize,
    dt: f64,
    lambda: f64,
    integrator: Option<IntegratorChoice>,
    heads: Option<HeadsHeader>,
    nets: Vec<NetHeader>,
    config: Option<TrainConfig>,
}

/// A trained model and, when known, the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub config: Option<TrainConfig>,
}

fn all_nets(model: &TrainedModel) -> Vec<&MlpParams> {
    let mut nets: Vec<&MlpParams> = model.dynamics.nets.iter().collect();
    if let Some(h) = &model.heads {
        nets.push(&h.encoder);
        nets.push(&h.decoder);
    }
    nets
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let d = &m.dynamics;
        let nets = all_nets(m);
        let header = Header {
            class: d.class,
            mode: m.mode,
            window: m.window,
            latent_dim: d.latent_dim,
            dt: d.dt,
            lambda: d.lambda,
            integrator: d.integrator,
            heads: m.heads.as_ref().map(|h| HeadsHeader {
                beta: h.beta,
                obs_shape: [h.obs_shape.0, h.obs_shape.1, h.obs_shape.2],
            }),
            nets: nets
                .iter()
                .map(|n| NetHeader {
                    sizes: n.sizes(),
                    activation: n.activation(),
                })
                .collect(),
            config: self.config.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for net in nets {
            for t in net.tensors() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CliError> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(CliError::Format("not a DYNC checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CliError::Format(format!("checkpoint version {version} is not supported")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(12..12 + header_len)
            .ok_or_else(|| CliError::Format("truncated checkpoint header".into()))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| CliError::Format(format!("checkpoint header: {e}")))?;

        let mut values = bytes[12 + header_len..].chunks_exact(8);
        if values.remainder().len() != 0 {
            return Err(CliError::Format("checkpoint payload is not a whole number of f64 values".into()));
        }
        let mut take = |rows: usize, cols: usize| -> Result<Tensor, CliError> {
            let data: Vec<f64> = values
                .by_ref()
                .take(rows * cols)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            if data.len() != rows * cols {
                return Err(CliError::Format("checkpoint payload is shorter than its header".into()));
            }
            Ok(Tensor::from_vec(rows, cols, data)?)
        };
        let mut nets = Vec::with_capacity(header.nets.len());
        for net in &header.nets {
            let mut layers = Vec::new();
            for pair in net.sizes.windows(2) {
                let w = take(pair[0], pair[1])?;
                let b = take(1, pair[1])?;
                layers.push((w, b));
            }
            nets.push(MlpParams::from_layers(layers, net.activation)?);
        }
        if values.next().is_some() {
            return Err(CliError::Format("checkpoint payload is longer than its header".into()));
        }

        let heads = match &header.heads {
            Some(h) => {
                if nets.len() < 2 {
                    return Err(CliError::Format("pixel checkpoint lacks encoder and decoder".into()));
                }
                let decoder = nets.pop().expect("decoder");
                let encoder = nets.pop().expect("encoder");
                Some(VaeHeads {
                    encoder,
                    decoder,
                    beta: h.beta,
                    window: header.window,
                    obs_shape: (h.obs_shape[0], h.obs_shape[1], h.obs_shape[2]),
                })
            }
            None => None,
        };
        let dynamics = DynamicsModel {
            class: header.class,
            nets,
            latent_dim: header.latent_dim,
            integrator: header.integrator,
            dt: header.dt,
            lambda: header.lambda,
        };
        let model = TrainedModel {
            dynamics,
            heads,
            mode: header.mode,
            window: header.window,
        };
        model.validate()?;
        Ok(Checkpoint {
            model,
            config: header.config,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Checkpoint, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// State-mode HGN whose energy is the mass-spring Hamiltonian `k q²/2 + p²/2m`.
pub fn mass_spring_oracle(k: f64, m: f64, dt: f64) -> Result<Checkpoint, CliError> {
    let nets = vec![MlpParams::quadratic(&[k]), MlpParams::quadratic(&[1.0 / m])];
    let dynamics = DynamicsModel::from_nets(ModelClass::Hgn, nets, 2, dt)?;
    Ok(Checkpoint {
        model: TrainedModel {
            dynamics,
            heads: None,
            mode: TrainMode::State,
            window: TrainConfig::default().window,
        },
        config: None,
    })
}
