pub mod diffnet;
pub mod error;
pub mod integrate;
pub mod metrics;
pub mod models;
pub mod systems;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
