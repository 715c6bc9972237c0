//! Encoder and decoder heads and the β-weighted evidence lower bound.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Direction, DynamicsModel, ModelClass};
use crate::diffnet::{Activation, MlpParams, MlpVars, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LOGVAR_MIN: f64 = -10.0;
const LOGVAR_MAX: f64 = 10.0;

/// Maps a window of frames to a Gaussian posterior over the latent state
/// and latent positions back to frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeHeads {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub beta: f64,
    pub window: usize,
    /// `(H, W, C)` of one frame.
    pub obs_shape: (usize, usize, usize),
}

impl VaeHeads {
    /// Leaky-ReLU heads with the given hidden widths.
    pub fn init<R: Rng + ?Sized>(
        latent_dim: usize,
        window: usize,
        obs_shape: (usize, usize, usize),
        hidden: &[usize],
        beta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let obs = obs_shape.0 * obs_shape.1 * obs_shape.2;
        let chain = |input: usize, output: usize| -> Vec<usize> {
            std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
        };
        let encoder = MlpParams::init(&chain(window * obs, 2 * latent_dim), Activation::LeakyRelu, rng)?;
        let decoder = MlpParams::init(&chain(latent_dim / 2, obs), Activation::LeakyRelu, rng)?;
        let heads = VaeHeads {
            encoder,
            decoder,
            beta,
            window,
            obs_shape,
        };
        heads.validate()?;
        Ok(heads)
    }

    pub fn validate(&self) -> Result<()> {
        let obs = self.obs_len();
        if self.window == 0 || obs == 0 {
            return Err(Error::invalid("window and frame size must be non-zero"));
        }
        if self.encoder.in_dim() != self.window * obs {
            return Err(Error::invalid(format!(
                "encoder takes {} inputs, expected {} frames of {obs}",
                self.encoder.in_dim(),
                self.window
            )));
        }
        let latent = self.latent_dim();
        if self.encoder.out_dim() % 4 != 0 || self.decoder.in_dim() != latent / 2 || self.decoder.out_dim() != obs {
            return Err(Error::invalid("decoder must map the latent position half to one frame"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta {} must be finite and non-negative", self.beta)));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim() / 2
    }

    pub fn obs_len(&self) -> usize {
        self.obs_shape.0 * self.obs_shape.1 * self.obs_shape.2
    }

    fn stack(&self, window: &[&[f64]]) -> Result<Tensor> {
        if window.len() != self.window {
            return Err(Error::LengthMismatch {
                expected: self.window,
                actual: window.len(),
            });
        }
        let mut flat = Vec::with_capacity(self.window * self.obs_len());
        for frame in window {
            if frame.len() != self.obs_len() {
                return Err(Error::LengthMismatch {
                    expected: self.obs_len(),
                    actual: frame.len(),
                });
            }
            flat.extend_from_slice(frame);
        }
        Ok(Tensor::row_vector(flat))
    }

    /// `(sample, mean, log_var)` with the given standard-normal noise.
    pub fn encode_with_noise(&self, window: &[&[f64]], noise: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let latent = self.latent_dim();
        if noise.len() != latent {
            return Err(Error::LengthMismatch {
                expected: latent,
                actual: noise.len(),
            });
        }
        let tape = Tape::new();
        let enc = self.encoder.on_tape(&tape);
        let x = tape.leaf(self.stack(window)?);
        let eps = tape.leaf(Tensor::row_vector(noise.to_vec()));
        let (s, m, lv) = encode_var(&enc, x, eps);
        let data = |v: Var<'_>| v.value().data().to_vec();
        Ok((data(s), data(m), data(lv)))
    }

    /// Reparameterised posterior sample, mean and log-variance.
    pub fn encode<R: Rng + ?Sized>(&self, window: &[&[f64]], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let noise: Vec<f64> = (0..self.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.encode_with_noise(window, &noise)
    }

    /// Frame in `[0, 1]` decoded from latent positions.
    pub fn decode(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.decoder.in_dim() {
            return Err(Error::LengthMismatch {
                expected: self.decoder.in_dim(),
                actual: q.len(),
            });
        }
        let logits = self.decoder.forward(q)?;
        Ok(logits.into_iter().map(crate::diffnet::tape::sigmoid).collect())
    }
}

/// Batched encoder: `x` is `B x (W·P)`, `noise` is `B x latent`.
pub fn encode_var<'t>(enc: &MlpVars<'t>, x: Var<'t>, noise: Var<'t>) -> (Var<'t>, Var<'t>, Var<'t>) {
    let latent = noise.shape().1;
    let out = enc.forward(x);
    let mean = out.cols(0, latent);
    let log_var = out.cols(latent, latent).clamp(LOGVAR_MIN, LOGVAR_MAX);
    let sample = mean + log_var.scale(0.5).exp() * noise;
    (sample, mean, log_var)
}

/// Batched decoder over latent positions.
pub fn decode_var<'t>(dec: &MlpVars<'t>, q: Var<'t>) -> Var<'t> {
    dec.forward(q).sigmoid()
}

/// `KL(N(μ, σ²) ‖ N(0, I))` summed over latent dimensions and averaged
/// over the batch.
pub fn gaussian_kl<'t>(mean: Var<'t>, log_var: Var<'t>) -> Var<'t> {
    let (rows, cols) = mean.shape();
    let per = mean * mean + log_var.exp() - log_var;
    per.sum().shift(-((rows * cols) as f64)).scale(0.5 / rows as f64)
}

/// Components of the training objective.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms<'t> {
    /// `recon + β·KL`.
    pub loss: Var<'t>,
    pub recon: Var<'t>,
    pub kl: Var<'t>,
}

fn mean_sq<'t>(a: Var<'t>, b: Var<'t>) -> Var<'t> {
    let d = a - b;
    (d * d).mean()
}

/// Records the β-ELBO of a batch of sequences.
///
/// `frames` holds `W + T` tensors of shape `B x P`; the latent state is
/// aligned with frame `W - 1` and rolled forward over the remaining `T`.
/// Time-reversed NODE training adds the reconstruction of frames
/// `W - 2, ..., 0` from a backward rollout.
pub fn elbo_terms<'t>(
    tape: &'t Tape,
    model: &DynamicsModel,
    dynamics: &[MlpVars<'t>],
    heads: &VaeHeads,
    enc: &MlpVars<'t>,
    dec: &MlpVars<'t>,
    frames: &[Tensor],
    noise: Tensor,
) -> Result<ElboTerms<'t>> {
    let w = heads.window;
    if frames.len() <= w {
        return Err(Error::InsufficientData(format!(
            "{} frames leave no targets after a window of {w}",
            frames.len()
        )));
    }
    let batch = frames[0].rows();
    let p = heads.obs_len();
    let mut stacked = Tensor::zeros(batch, w * p);
    for (k, frame) in frames[..w].iter().enumerate() {
        if frame.shape() != (batch, p) {
            return Err(Error::invalid(format!("frame {k} has shape {:?}", frame.shape())));
        }
        for r in 0..batch {
            stacked.data_mut()[r * w * p + k * p..r * w * p + (k + 1) * p].copy_from_slice(frame.row(r));
        }
    }
    let (s0, mean, log_var) = encode_var(enc, tape.leaf(stacked), tape.leaf(noise));
    let half = model.latent_dim / 2;
    let horizon = frames.len() - w;

    let states = model.rollout_var(tape, dynamics, s0, horizon, Direction::Forward)?;
    let mut recon: Option<Var<'t>> = None;
    for (t, s) in states.iter().enumerate().skip(1) {
        let err = mean_sq(decode_var(dec, s.cols(0, half)), tape.leaf(frames[w - 1 + t].clone()));
        recon = Some(recon.map_or(err, |r| r + err));
    }
    let mut recon = recon.expect("at least one target").scale(1.0 / horizon as f64);

    if model.class == ModelClass::NodeTr && w > 1 {
        let back = model.rollout_var(tape, dynamics, s0, w - 1, Direction::Backward)?;
        let mut total: Option<Var<'t>> = None;
        for (k, s) in back.iter().enumerate().skip(1) {
            let err = mean_sq(decode_var(dec, s.cols(0, half)), tape.leaf(frames[w - 1 - k].clone()));
            total = Some(total.map_or(err, |r| r + err));
        }
        recon = recon + total.expect("window above one").scale(1.0 / (w - 1) as f64);
    }

    let kl = gaussian_kl(mean, log_var);
    let loss = recon + kl.scale(heads.beta);
    Ok(ElboTerms { loss, recon, kl })
}

/// Negative β-ELBO of one sequence of `W + T` frames, as a loss to minimise.
pub fn elbo_loss<R: Rng + ?Sized>(
    model: &DynamicsModel,
    heads: &VaeHeads,
    sequence: &[&[f64]],
    beta: f64,
    rng: &mut R,
) -> Result<f64> {
    let heads = VaeHeads {
        beta,
        ..heads.clone()
    };
    heads.validate()?;
    let frames = sequence
        .iter()
        .map(|f| {
            if f.len() != heads.obs_len() {
                return Err(Error::LengthMismatch {
                    expected: heads.obs_len(),
                    actual: f.len(),
                });
            }
            Ok(Tensor::row_vector(f.to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = Tensor::row_vector((0..heads.latent_dim()).map(|_| rng.sample(StandardNormal)).collect());
    let tape = Tape::new();
    let dynamics: Vec<_> = model.nets.iter().map(|m| m.on_tape(&tape)).collect();
    let enc = heads.encoder.on_tape(&tape);
    let dec = heads.decoder.on_tape(&tape);
    let terms = elbo_terms(&tape, model, &dynamics, &heads, &enc, &dec, &frames, noise)?;
    let value = terms.loss.value().item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss evaluated to {value}")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_heads(bias: f64) -> VaeHeads {
        let mut enc_bias = Tensor::zeros(1, 4);
        enc_bias.data_mut()[0] = bias;
        let encoder = MlpParams::from_layers(vec![(Tensor::zeros(6, 4), enc_bias)], Activation::LeakyRelu).unwrap();
        let decoder = MlpParams::from_layers(
            vec![(Tensor::zeros(1, 3), Tensor::filled(1, 3, 0.5))],
            Activation::LeakyRelu,
        )
        .unwrap();
        VaeHeads {
            encoder,
            decoder,
            beta: 1.0,
            window: 2,
            obs_shape: (1, 3, 1),
        }
    }

    #[test]
    fn zero_encoder_returns_bias() {
        let heads = zero_heads(0.7);
        let frames: [&[f64]; 2] = [&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]];
        let (s, m, lv) = heads.encode_with_noise(&frames, &[0.0, 0.0]).unwrap();
        assert_eq!(m, vec![0.7, 0.0]);
        assert_eq!(lv, vec![0.0, 0.0]);
        assert_eq!(s, m);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(heads.encode(&frames, &mut a).unwrap(), heads.encode(&frames, &mut b).unwrap());
    }

    #[test]
    fn clamped_variance_sample_near_mean() {
        let mut heads = zero_heads(0.0);
        let mut b = Tensor::zeros(1, 4);
        b.data_mut()[2] = -1e3;
        b.data_mut()[3] = -1e3;
        heads.encoder = MlpParams::from_layers(vec![(Tensor::zeros(6, 4), b)], Activation::LeakyRelu).unwrap();
        let frames: [&[f64]; 2] = [&[0.0; 3], &[0.0; 3]];
        let (s, m, lv) = heads.encode_with_noise(&frames, &[2.0, -1.0]).unwrap();
        assert_eq!(lv, vec![-10.0, -10.0]);
        for (k, (s, m)) in s.iter().zip(&m).enumerate() {
            assert!((s - m).abs() <= (-5f64).exp() * [2.0, 1.0][k] + 1e-15);
        }
    }

    #[test]
    fn zero_decoder_is_constant_sigmoid() {
        let heads = zero_heads(0.0);
        let img = heads.decode(&[3.0]).unwrap();
        let expected = 1.0 / (1.0 + (-0.5f64).exp());
        assert!(img.iter().all(|&v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn kl_of_shifted_mean() {
        let tape = Tape::new();
        let mean = tape.leaf(Tensor::row_vector(vec![1.0, 0.0, 0.0]));
        let lv = tape.leaf(Tensor::row_vector(vec![0.0; 3]));
        assert!((gaussian_kl(mean, lv).value().item() - 0.5).abs() < 1e-15);
        let zero = tape.leaf(Tensor::row_vector(vec![0.0; 3]));
        assert_eq!(gaussian_kl(zero, lv).value().item(), 0.0);
    }

    #[test]
    fn perfect_decoder_has_zero_loss() {
        // Decoder output sigmoid(0) = 0.5 everywhere, targets equal to it.
        let mut heads = zero_heads(0.0);
        heads.decoder = MlpParams::zeros(&[1, 3], Activation::LeakyRelu).unwrap();
        let f = MlpParams::zeros(&[2, 2], Activation::Swish).unwrap();
        let model = DynamicsModel::from_nets(ModelClass::Node, vec![f], 2, 0.05).unwrap();
        let frame = [0.5; 3];
        let seq: Vec<&[f64]> = vec![&frame; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(elbo_loss(&model, &heads, &seq, 1.0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn beta_zero_is_reconstruction_only() {
        let heads = zero_heads(2.0);
        let f = MlpParams::zeros(&[2, 2], Activation::Swish).unwrap();
        let model = DynamicsModel::from_nets(ModelClass::Node, vec![f], 2, 0.05).unwrap();
        let frames: Vec<Vec<f64>> = (0..4).map(|k| vec![0.1 * k as f64; 3]).collect();
        let seq: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = elbo_loss(&model, &heads, &seq, 0.0, &mut rng).unwrap();
        let out = 1.0 / (1.0 + (-0.5f64).exp());
        let expected = ((out - 0.2f64).powi(2) + (out - 0.3f64).powi(2)) / 2.0;
        assert!((loss - expected).abs() < 1e-15);
        let weighted = elbo_loss(&model, &heads, &seq, 1.0, &mut rng).unwrap();
        assert!((weighted - expected - 2.0).abs() < 1e-12);
    }
}
