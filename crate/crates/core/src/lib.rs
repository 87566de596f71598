//! Overfitting suppression for same-resolution image super-resolution:
//! paired MixUp, learned-degradation data synthesis, a cascading U-Net
//! with channel attention, and the training / evaluation machinery around
//! them.
//!
//! The network math is generic over [`Scalar`] (`f32` for training, `f64`
//! for gradient checks); the aliases below name the common instantiations.

pub mod degradation;
pub mod error;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod mixup;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use image::{ImageBuffer, ImagePair};
pub use manifest::DatasetManifest;
pub use rng::Rng;
pub use scalar::Scalar;

/// Single-precision weights, used for training and inference.
pub type Weights = model::ModelWeights<f32>;
/// Double-precision weights, used by gradient checks.
pub type Weights64 = model::ModelWeights<f64>;
pub type Tensor32 = model::Tensor<f32>;
pub type Tensor64 = model::Tensor<f64>;
pub type TrainState = training::TrainState<f32>;
