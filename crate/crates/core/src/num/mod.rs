//! Numerical substrate: matrices, seeded random streams, the conditioner MLP,
//! Adam, and a finite-difference gradient oracle.

pub mod adam;
pub mod finite_diff;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use finite_diff::finite_diff_grad;
pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_backward_into, mlp_forward, MlpCache, MlpGrads, MlpParams, Mode};
pub use rng::RngStream;
