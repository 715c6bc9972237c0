//! Central-difference checks for reverse-mode gradients.

use super::mlp::{grad_params, MlpParams};
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest entrywise `|a - n| / max(|a|, |n|, 1e-3)`.
///
/// The floor keeps near-zero gradients from dominating through roundoff.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Checks both the input gradient and the parameter gradient of
/// `sum(net(input))` against central differences with step `h`.
pub fn check_gradients(net: &MlpParams, input: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let total = |n: &MlpParams, x: &[f64]| -> f64 { n.forward(x).map(|y| y.iter().sum()).unwrap_or(f64::NAN) };

    let tape = Tape::new();
    let vars = net.on_tape(&tape);
    let x = tape.leaf(Tensor::row_vector(input.to_vec()));
    let dx = tape.grad(vars.forward(x).sum(), &[x])?[0].value();
    let numeric_dx = central_difference(|x| total(net, x), input, h);
    let mut worst = max_relative_error(dx.data(), &numeric_dx);

    let (_, grads) = grad_params(&[net], |tape, nets| {
        let x = tape.leaf(Tensor::row_vector(input.to_vec()));
        Ok(nets[0].forward(x).sum())
    })?;
    let tensors: Vec<Tensor> = net.tensors().iter().map(|t| (**t).clone()).collect();
    for (k, g) in grads[0].iter().enumerate() {
        let numeric = central_difference(
            |w| {
                let mut ts = tensors.clone();
                ts[k].data_mut().copy_from_slice(w);
                net.with_tensors(ts).map(|n| total(&n, input)).unwrap_or(f64::NAN)
            },
            tensors[k].data(),
            h,
        );
        worst = worst.max(max_relative_error(g.data(), &numeric));
    }
    Ok(worst)
}
