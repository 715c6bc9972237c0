//! Camera paths over a room: a fixed-radius circle or an expanding spiral.
//! Angles are in degrees, and velocities are per degree.

use serde::{Deserialize, Serialize};

/// Spiral growth per degree.
pub const SPIRAL_GROWTH: f64 = 1.005_361_1;
/// Finite-difference half-width in degrees.
pub const FD_STEP_DEGREES: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraMode {
    Circle,
    Spiral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

pub fn radius(mode: CameraMode, a: f64, theta_degrees: f64) -> f64 {
    match mode {
        CameraMode::Circle => a,
        CameraMode::Spiral => a * SPIRAL_GROWTH.powf(theta_degrees),
    }
}

pub fn position(mode: CameraMode, a: f64, theta_degrees: f64) -> [f64; 3] {
    let r = radius(mode, a, theta_degrees);
    let (s, c) = theta_degrees.to_radians().sin_cos();
    [r * c, r * s, 1.0 - r]
}

/// Position and central-difference velocity at `theta_degrees`.
pub fn camera_state(mode: CameraMode, a: f64, theta_degrees: f64) -> CameraState {
    let h = FD_STEP_DEGREES;
    let ahead = position(mode, a, theta_degrees + h);
    let behind = position(mode, a, theta_degrees - h);
    CameraState {
        position: position(mode, a, theta_degrees),
        velocity: [0, 1, 2].map(|k| (ahead[k] - behind[k]) / (2.0 * h)),
    }
}

/// Central second difference of position, per degree squared.
pub fn acceleration(mode: CameraMode, a: f64, theta_degrees: f64) -> [f64; 3] {
    let h = FD_STEP_DEGREES;
    let ahead = position(mode, a, theta_degrees + h);
    let here = position(mode, a, theta_degrees);
    let behind = position(mode, a, theta_degrees - h);
    [0, 1, 2].map(|k| (ahead[k] - 2.0 * here[k] + behind[k]) / (h * h))
}
