//! Fixed inputs shared by the benchmarks.

use dynsuite_core::diffnet::{Activation, MlpParams};
use dynsuite_core::models::{DynamicsModel, ModelClass};
use dynsuite_core::systems::{sample_initial, trajectory_seed, PhaseState, SystemKind, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

pub fn mlp(sizes: &[usize]) -> MlpParams {
    MlpParams::init(sizes, Activation::Swish, &mut rng()).expect("valid sizes")
}

pub fn input(dim: usize) -> Vec<f64> {
    let mut rng = rng();
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn model(class: ModelClass, latent_dim: usize) -> DynamicsModel {
    DynamicsModel::init(class, latent_dim, 0.05, &[64, 64], &mut rng()).expect("valid model")
}

pub fn system(kind: SystemKind) -> (PhaseState, SystemSpec) {
    sample_initial(&SystemSpec::new(kind), trajectory_seed(0, 0)).expect("sampling succeeds")
}
