//! Two-population replicator dynamics of a zero-sum matrix game.
//!
//! The state is `q = (x, y)` with both blocks on a probability simplex, and
//! `p = (ẋ, ẏ)`. Its derivative is `(ẋ, ẏ)` for `q` and the chain rule
//! `J(q)·q̇` for `p`.

use super::{PhaseState, SystemSpec};
use crate::error::Result;

/// `(ẋ, ẏ)` with the column player's payoff `B = -A`.
pub fn rates(n: usize, a: &[f64], x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ay: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * y[j]).sum()).collect();
    let xa: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[i] * a[i * n + j]).sum()).collect();
    let xay: f64 = x.iter().zip(&ay).map(|(x, v)| x * v).sum();
    let dx = (0..n).map(|i| x[i] * (ay[i] - xay)).collect();
    // (xᵀB)_j - xᵀBy with B = -A.
    let dy = (0..n).map(|j| y[j] * (-xa[j] + xay)).collect();
    (dx, dy)
}

/// Derivative of the state `(x, y, ẋ, ẏ)`.
pub fn vector_field(spec: &SystemSpec, q: &[f64]) -> Result<PhaseState> {
    let (n, a) = spec.payoff()?;
    let (x, y) = q.split_at(n);
    let (dx, dy) = rates(n, &a, x, y);
    let ay: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * y[j]).sum()).collect();
    let xa: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[i] * a[i * n + j]).sum()).collect();
    let xay: f64 = x.iter().zip(&ay).map(|(x, v)| x * v).sum();

    // ∂ẋ_i/∂x_k = δ_ik (Ay_i - xᵀAy) - x_i (Ay)_k
    // ∂ẋ_i/∂y_l = x_i (A_il - (xᵀA)_l)
    // ∂ẏ_j/∂y_l = δ_jl (xᵀAy - (xᵀA)_j) + y_j (xᵀA)_l
    // ∂ẏ_j/∂x_k = y_j ((Ay)_k - A_kj)
    let ddx: Vec<f64> = (0..n)
        .map(|i| {
            let from_x: f64 = (ay[i] - xay) * dx[i] - x[i] * (0..n).map(|k| ay[k] * dx[k]).sum::<f64>();
            let from_y: f64 = x[i] * (0..n).map(|l| (a[i * n + l] - xa[l]) * dy[l]).sum::<f64>();
            from_x + from_y
        })
        .collect();
    let ddy: Vec<f64> = (0..n)
        .map(|j| {
            let from_y: f64 = (xay - xa[j]) * dy[j] + y[j] * (0..n).map(|l| xa[l] * dy[l]).sum::<f64>();
            let from_x: f64 = y[j] * (0..n).map(|k| (ay[k] - a[k * n + j]) * dx[k]).sum::<f64>();
            from_y + from_x
        })
        .collect();

    let mut dq = dx;
    dq.extend(dy);
    let mut dp = ddx;
    dp.extend(ddy);
    Ok(PhaseState::new(dq, dp))
}

/// Clamps negative shares to zero and renormalises each block.
pub fn project_to_simplex(q: &mut [f64], n: usize) {
    for block in q.chunks_mut(n) {
        for v in block.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = block.iter().sum();
        if total > 0.0 {
            for v in block.iter_mut() {
                *v /= total;
            }
        } else {
            block.fill(1.0 / n as f64);
        }
    }
}
