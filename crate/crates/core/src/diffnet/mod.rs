//! Reverse-mode differentiation, MLPs and the Adam optimiser.

pub mod adam;
pub mod gradcheck;
pub mod lagrangian;
pub mod mlp;
pub mod tape;

pub use adam::{clip_global_norm, AdamState};
pub use gradcheck::{central_difference, check_gradients, max_relative_error};
pub use lagrangian::{lagrangian_terms, second_order_lagrangian, tril_len, LagrangianTerms};
pub use mlp::{grad_params, Activation, Layer, MlpParams, MlpVars, LEAKY_SLOPE};
pub use tape::{concat_cols, Tape, Var};
