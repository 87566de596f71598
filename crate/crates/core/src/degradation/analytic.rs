//! Hand-specified degraders: bicubic resampling and additive noise.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};
use crate::rng::Rng;

/// Catmull-Rom cubic (`a = -0.5`).
pub fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let t = x.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and normalized weights for every output index along one
/// axis. Downscaling widens the kernel by the scale factor (antialiased);
/// out-of-range taps replicate the edge sample.
fn contributions(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = out_len as f64 / in_len as f64;
    let (kernel_scale, support) = if scale < 1.0 { (scale, 2.0 / scale) } else { (1.0, 2.0) };
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let first = (center - support).floor() as isize;
            let last = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in first..=last {
                let wgt = cubic((center - j as f64) * kernel_scale);
                if wgt == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, in_len as isize - 1) as usize;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Separable bicubic resize to `out_h x out_w`. Not clamped.
pub fn resize_bicubic(image: &ImageBuffer, out_h: usize, out_w: usize) -> ImageBuffer {
    let (h, w) = image.dims();
    let cols = contributions(w, out_w);
    let rows = contributions(h, out_h);
    let src = image.samples();
    let mut horizontal = vec![0.0f64; h * out_w * CHANNELS];
    for y in 0..h {
        for (x, taps) in cols.iter().enumerate() {
            for c in 0..CHANNELS {
                horizontal[(y * out_w + x) * CHANNELS + c] =
                    taps.iter().map(|&(k, wt)| wt * src[(y * w + k) * CHANNELS + c] as f64).sum();
            }
        }
    }
    let mut out = Vec::with_capacity(out_h * out_w * CHANNELS);
    for taps in &rows {
        for x in 0..out_w {
            for c in 0..CHANNELS {
                let v: f64 = taps
                    .iter()
                    .map(|&(k, wt)| wt * horizontal[(k * out_w + x) * CHANNELS + c])
                    .sum();
                out.push(v as f32);
            }
        }
    }
    ImageBuffer::new(out_h, out_w, out).expect("sized buffer")
}

/// Bicubic downsample by `factor`, then upsample back; clamped to [0, 1].
pub fn bicubic_degrade(hr: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    let (h, w) = hr.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            factor,
        });
    }
    let small = resize_bicubic(hr, h / factor, w / factor);
    Ok(resize_bicubic(&small, h, w).clamp01())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeSigma(sigma))
    }
}

/// i.i.d. `N(0, sigma^2)` per sample, clamped.
pub fn add_gaussian_noise(image: &ImageBuffer, sigma: f64, rng: &mut Rng) -> Result<ImageBuffer> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    Ok(image.map(|v| {
        let z: f64 = StandardNormal.sample(rng);
        (v as f64 + sigma * z).clamp(0.0, 1.0) as f32
    }))
}

/// Poisson-Gaussian approximation: per-sample standard deviation
/// `sqrt(read^2 + shot^2 * v)` for clean value `v`, clamped.
pub fn add_signal_dependent_noise(image: &ImageBuffer, sigma_read: f64, sigma_shot: f64, rng: &mut Rng) -> Result<ImageBuffer> {
    check_sigma(sigma_read)?;
    check_sigma(sigma_shot)?;
    if sigma_read == 0.0 && sigma_shot == 0.0 {
        return Ok(image.clone());
    }
    Ok(image.map(|v| {
        let std = (sigma_read * sigma_read + sigma_shot * sigma_shot * (v.max(0.0) as f64)).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        (v as f64 + std * z).clamp(0.0, 1.0) as f32
    }))
}
