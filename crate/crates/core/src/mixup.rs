//! MixUp for paired LR/HR samples.
//!
//! Both planes of a pair are blended with the same weight, so a mixed pair
//! obeys any linear degradation the source pairs obey.

use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, ImagePair};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub alpha: f64,
    pub enabled: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            alpha: 1.2,
            enabled: true,
        }
    }
}

impl MixupConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidAlpha(self.alpha))
        }
    }
}

/// One draw from `Beta(alpha, alpha)`.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let beta = Beta::new(alpha, alpha).map_err(|_| Error::InvalidAlpha(alpha))?;
    Ok(beta.sample(rng))
}

fn blend(a: &ImageBuffer, b: &ImageBuffer, lambda: f32) -> ImageBuffer {
    let mu = 1.0 - lambda;
    let data = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            // clamp to the segment so rounding never leaves the convex hull
            (lambda * x + mu * y).clamp(x.min(y), x.max(y))
        })
        .collect();
    ImageBuffer::new(a.height(), a.width(), data).expect("same dims as inputs")
}

/// `lambda * pair_i + (1 - lambda) * pair_j`, identically on both planes.
pub fn mixup_pair(pair_i: &ImagePair, pair_j: &ImagePair, lambda: f64) -> Result<ImagePair> {
    if pair_i.dims() != pair_j.dims() {
        let ((h1, w1), (h2, w2)) = (pair_i.dims(), pair_j.dims());
        return Err(Error::DimensionMismatch(format!("{h1}x{w1} vs {h2}x{w2}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    let l = lambda as f32;
    ImagePair::new(blend(pair_i.lr(), pair_j.lr(), l), blend(pair_i.hr(), pair_j.hr(), l))
}

/// Mixes element `k` with `batch[partners[k]]` using `lambdas[k]`.
pub fn mixup_batch_with(batch: &[ImagePair], lambdas: &[f64], partners: &[usize]) -> Result<Vec<ImagePair>> {
    if lambdas.len() != batch.len() || partners.len() != batch.len() {
        return Err(Error::DimensionMismatch(format!(
            "batch of {} with {} lambdas and {} partners",
            batch.len(),
            lambdas.len(),
            partners.len()
        )));
    }
    batch
        .iter()
        .zip(lambdas)
        .zip(partners)
        .map(|((pair, &lambda), &j)| {
            let partner = batch
                .get(j)
                .ok_or_else(|| Error::DimensionMismatch(format!("partner index {j} out of range")))?;
            mixup_pair(pair, partner, lambda)
        })
        .collect()
}

/// Per-element lambda, partners from a random permutation of the batch.
pub fn mixup_batch(batch: Vec<ImagePair>, config: &MixupConfig, rng: &mut Rng) -> Result<Vec<ImagePair>> {
    if !config.enabled {
        return Ok(batch);
    }
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let partners = rng.permutation(batch.len());
    let lambdas = (0..batch.len())
        .map(|_| sample_lambda(config.alpha, rng))
        .collect::<Result<Vec<_>>>()?;
    mixup_batch_with(&batch, &lambdas, &partners)
}
