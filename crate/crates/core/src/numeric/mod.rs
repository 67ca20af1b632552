//! Dense numeric substrate for the selector network.
//!
//! Everything is `f64` and single-threaded. The network is fixed to
//! `dense -> batchnorm -> ReLU` twice followed by `dense -> sigmoid`.

mod loss;
mod matrix;
mod model;
mod rng;

pub use loss::bce_loss;
pub use matrix::Matrix;
pub use model::{
    AdamConfig, AdamState, BatchNormParams, DenseParams, ForwardCache, Gradients, Mode,
    ModelParams, BN_EPS, BN_MOMENTUM,
};
pub use rng::Rng;
