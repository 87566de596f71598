//! Cascading U-Net with residual channel attention blocks.

mod config;
pub mod layers;
mod network;
mod tensor;
mod weights;

pub use config::{count_parameters, ModelConfig, INTERNAL_SCALE};
pub use layers::{pixel_shuffle, pixel_unshuffle, ChannelAttention, Conv, ParamKind, ParamSpec, Rcab, Unit};
pub use network::{ForwardCache, GlobalCascade, LocalCascade, Network};
pub use tensor::Tensor;
pub use weights::ModelWeights;

use crate::error::Result;
use crate::image::ImageBuffer;
use crate::rng::Rng;
use crate::scalar::Scalar;

pub fn init_weights<T: Scalar>(config: ModelConfig, rng: &mut Rng) -> Result<ModelWeights<T>> {
    ModelWeights::init(config, rng)
}

/// Inference on an image, output clamped to [0, 1].
pub fn unet_forward<T: Scalar>(lr: &ImageBuffer, weights: &ModelWeights<T>) -> Result<ImageBuffer> {
    weights.network().restore_image(weights.values(), lr)
}
