use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Negative-side slope of the leaky ReLU used by encoder and decoder heads.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity. The final layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    LeakyRelu,
    Identity,
    /// `x^2`; lets exact quadratic energies be written as networks.
    Square,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * super::tape::sigmoid(x),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Identity => x,
            Activation::Square => x * x,
        }
    }

    fn apply_var(self, x: Var<'_>) -> Var<'_> {
        match self {
            Activation::Swish => x.swish(),
            Activation::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
            Activation::Identity => x,
            Activation::Square => x * x,
        }
    }
}

/// One affine layer: `x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Arc<Tensor>,
    pub bias: Arc<Tensor>,
}

/// A multilayer perceptron's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activation: Activation,
}

impl MlpParams {
    /// Random initialisation, uniform in `±sqrt(1/fan_in)` for weights and
    /// biases alike. `sizes` lists every layer width, input first.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (1.0 / fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                };
                let weight = Tensor::from_vec(fan_in, fan_out, draw(fan_in * fan_out))?;
                let bias = Tensor::from_vec(1, fan_out, draw(fan_out))?;
                Ok(Layer {
                    weight: Arc::new(weight),
                    bias: Arc::new(bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MlpParams { layers, activation })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Arc::new(Tensor::zeros(w[0], w[1])),
                bias: Arc::new(Tensor::zeros(1, w[1])),
            })
            .collect();
        Ok(MlpParams { layers, activation })
    }

    /// Builds from explicit `(weight, bias)` pairs, checking that the shapes
    /// chain.
    pub fn from_layers(layers: Vec<(Tensor, Tensor)>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        let mut prev_out = None;
        for (i, (w, b)) in layers.iter().enumerate() {
            if b.shape() != (1, w.cols()) {
                return Err(Error::invalid(format!(
                    "layer {i}: bias shape {:?} does not match weight {:?}",
                    b.shape(),
                    w.shape()
                )));
            }
            if let Some(p) = prev_out {
                if p != w.rows() {
                    return Err(Error::invalid(format!(
                        "layer {i}: expects {} inputs but previous layer emits {p}",
                        w.rows()
                    )));
                }
            }
            prev_out = Some(w.cols());
        }
        Ok(MlpParams {
            layers: layers
                .into_iter()
                .map(|(w, b)| Layer {
                    weight: Arc::new(w),
                    bias: Arc::new(b),
                })
                .collect(),
            activation,
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad MLP layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.weight.cols()))
            .collect()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<Arc<Tensor>> {
        self.layers
            .iter()
            .flat_map(|l| [Arc::clone(&l.weight), Arc::clone(&l.bias)])
            .collect()
    }

    /// Same architecture with new parameter values, in [`Self::tensors`] order.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != 2 * self.layers.len() {
            return Err(Error::LengthMismatch {
                expected: 2 * self.layers.len(),
                actual: tensors.len(),
            });
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(self.layers.len());
        for old in &self.layers {
            let (w, b) = (it.next().unwrap(), it.next().unwrap());
            if w.shape() != old.weight.shape() || b.shape() != old.bias.shape() {
                return Err(Error::invalid("replacement tensor shape differs"));
            }
            layers.push(Layer {
                weight: Arc::new(w),
                bias: Arc::new(b),
            });
        }
        Ok(MlpParams {
            layers,
            activation: self.activation,
        })
    }

    /// Multiplies the final layer by `factor`, scaling the network output.
    pub fn scaled_output(&self, factor: f64) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().unwrap();
        last.weight = Arc::new(last.weight.map(|v| v * factor));
        last.bias = Arc::new(last.bias.map(|v| v * factor));
        out
    }

    /// Plain forward pass on a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::row_vector(input.to_vec());
        Ok(self.forward_batch(&x)?.into_data())
    }

    /// Plain forward pass on a batch (one input per row).
    pub fn forward_batch(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.in_dim() {
            return Err(Error::invalid(format!(
                "MLP expects {} inputs, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = Tensor::matmul(&x, false, &layer.weight, false)?;
            let cols = y.cols();
            let bias = layer.bias.data();
            for (k, v) in y.data_mut().iter_mut().enumerate() {
                *v += bias[k % cols];
                if i != last {
                    *v = self.activation.apply(*v);
                }
            }
            x = y;
        }
        Ok(x)
    }

    /// The scalar network `x -> sum_i c_i x_i^2 / 2`, exact by construction.
    pub fn quadratic(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        let mut eye = Tensor::zeros(n, n);
        for i in 0..n {
            eye.set(i, i, 1.0);
        }
        let out = Tensor::from_vec(n, 1, coeffs.iter().map(|c| c / 2.0).collect()).expect("shape");
        MlpParams::from_layers(
            vec![(eye, Tensor::zeros(1, n)), (out, Tensor::zeros(1, 1))],
            Activation::Square,
        )
        .expect("quadratic layers chain")
    }

    /// Records the parameters on `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> MlpVars<'t> {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        tape.leaf_shared(Arc::clone(&l.weight)),
                        tape.leaf_shared(Arc::clone(&l.bias)),
                    )
                })
                .collect(),
            activation: self.activation,
        }
    }

    /// Exact gradient of a scalar-output network with respect to its input.
    pub fn grad_input(&self, input: &[f64]) -> Result<Vec<f64>> {
        if self.out_dim() != 1 {
            return Err(Error::invalid(format!(
                "grad_input needs a scalar network, out_dim = {}",
                self.out_dim()
            )));
        }
        if input.len() != self.in_dim() {
            return Err(Error::invalid(format!(
                "MLP expects {} inputs, got {}",
                self.in_dim(),
                input.len()
            )));
        }
        let tape = Tape::new();
        let vars = self.on_tape(&tape);
        let x = tape.leaf(Tensor::row_vector(input.to_vec()));
        let y = vars.forward(x).sum();
        let g = tape.grad(y, &[x])?;
        Ok(g[0].value().data().to_vec())
    }
}

/// An MLP's parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct MlpVars<'t> {
    layers: Vec<(Var<'t>, Var<'t>)>,
    activation: Activation,
}

impl<'t> MlpVars<'t> {
    /// Batched forward pass; `input` is `B x in_dim`.
    pub fn forward(&self, input: Var<'t>) -> Var<'t> {
        let rows = input.shape().0;
        let last = self.layers.len() - 1;
        let mut x = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            x = x.matmul(w) + b.broadcast_rows(rows);
            if i != last {
                x = self.activation.apply_var(x);
            }
        }
        x
    }

    /// Parameter handles in [`MlpParams::tensors`] order.
    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Evaluates `loss` on freshly recorded copies of `nets` and returns its
/// value together with the gradient of every parameter tensor, grouped per
/// network in [`MlpParams::tensors`] order.
pub fn grad_params<F>(nets: &[&MlpParams], loss: F) -> Result<(f64, Vec<Vec<Tensor>>)>
where
    F: for<'t> FnOnce(&'t Tape, &[MlpVars<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<MlpVars<'_>> = nets.iter().map(|n| n.on_tape(&tape)).collect();
    let out = loss(&tape, &vars)?;
    let value = out.value().item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss evaluated to {value}")));
    }
    let flat: Vec<Var<'_>> = vars.iter().flat_map(|v| v.vars()).collect();
    let grads = tape.grad(out, &flat)?;
    let mut it = grads.into_iter();
    let grouped = vars
        .iter()
        .map(|v| {
            (0..v.layers.len() * 2)
                .map(|_| (*it.next().unwrap().value()).clone())
                .collect()
        })
        .collect();
    Ok((value, grouped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_final_bias() {
        let net = MlpParams::zeros(&[3, 5, 2], Activation::Swish).unwrap();
        let mut tensors: Vec<Tensor> = net.tensors().iter().map(|t| (**t).clone()).collect();
        tensors[3] = Tensor::row_vector(vec![0.25, -1.5]);
        let net = net.with_tensors(tensors).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn single_swish_unit() {
        // 1 -> 1 hidden (w=1, b=0, swish) -> 1 output (w=1, b=0)
        let one = || Tensor::scalar(1.0);
        let zero = || Tensor::zeros(1, 1);
        let net = MlpParams::from_layers(vec![(one(), zero()), (one(), zero())], Activation::Swish).unwrap();
        let y = net.forward(&[1.0]).unwrap()[0];
        assert!((y - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(net.forward(&[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = MlpParams::from_layers(
            vec![
                (Tensor::zeros(2, 3), Tensor::zeros(1, 3)),
                (Tensor::zeros(4, 1), Tensor::zeros(1, 1)),
            ],
            Activation::Swish,
        );
        assert!(bad.is_err());
        let net = MlpParams::zeros(&[2, 3, 1], Activation::Swish).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        let vec_net = MlpParams::zeros(&[2, 3, 2], Activation::Swish).unwrap();
        assert!(vec_net.grad_input(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::Swish, Activation::LeakyRelu, Activation::Identity] {
            let net = MlpParams::init(&[3, 8, 8, 2], act, &mut rng).unwrap();
            let x = Tensor::from_vec(2, 3, vec![0.1, -0.4, 2.0, -1.0, 0.3, 0.0]).unwrap();
            let plain = net.forward_batch(&x).unwrap();
            let tape = Tape::new();
            let taped = net.on_tape(&tape).forward(tape.leaf(x)).value();
            for (a, b) in plain.data().iter().zip(taped.data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn half_square_norm_gradient_is_input() {
        let net = MlpParams::quadratic(&[1.0, 1.0, 1.0]);
        let x = [0.3, -1.2, 2.5];
        assert!((net.forward(&x).unwrap()[0] - (0.09 + 1.44 + 6.25) / 2.0).abs() < 1e-15);
        assert_eq!(net.grad_input(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn linear_net_gradient_is_weight_product() {
        let net = MlpParams::from_layers(
            vec![
                (Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), Tensor::zeros(1, 2)),
                (Tensor::from_vec(2, 1, vec![0.5, -1.0]).unwrap(), Tensor::zeros(1, 1)),
            ],
            Activation::Identity,
        )
        .unwrap();
        let g = net.grad_input(&[0.3, -0.2]).unwrap();
        assert_eq!(g, vec![1.0 * 0.5 - 2.0, 3.0 * 0.5 - 4.0]);
        let zero = MlpParams::zeros(&[2, 4, 1], Activation::Swish).unwrap();
        assert_eq!(zero.grad_input(&[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
    }
}
