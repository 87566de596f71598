//! PSNR / SSIM on RGB, the central-crop validation protocol and
//! dihedral self-ensembling.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{load_image, Dihedral, ImageBuffer};
use crate::manifest::DatasetManifest;

/// Anything that maps an LR image to a restored image of the same size.
pub trait Restorer: Sync {
    fn restore(&self, lr: &ImageBuffer) -> Result<ImageBuffer>;
}

impl<F> Restorer for F
where
    F: Fn(&ImageBuffer) -> Result<ImageBuffer> + Sync,
{
    fn restore(&self, lr: &ImageBuffer) -> Result<ImageBuffer> {
        self(lr)
    }
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRestorer;

impl Restorer for IdentityRestorer {
    fn restore(&self, lr: &ImageBuffer) -> Result<ImageBuffer> {
        Ok(lr.clone())
    }
}

/// PSNR in dB. Identical inputs are reported as a marker, not +inf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Identical,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Identical => None,
        }
    }

    /// Identical maps to `f64::INFINITY`, for ordering and logging.
    pub fn to_f64(self) -> f64 {
        self.db().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Identical => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// `10 log10(1 / MSE)` over all H x W x 3 samples.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Psnr> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(Psnr::Identical)
    } else {
        Ok(Psnr::Finite(10.0 * (1.0 / m).log10()))
    }
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter, valid region only.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean local SSIM per channel (11x11 Gaussian, sigma 1.5), averaged over RGB.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: SSIM_WINDOW,
        });
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.samples().iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.samples().iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
        let (mu_a, _, _) = filter_valid(&pa, h, w, &win);
        let (mu_b, _, _) = filter_valid(&pb, h, w, &win);
        let (e_aa, _, _) = filter_valid(&prod(&pa, &pa), h, w, &win);
        let (e_bb, _, _) = filter_valid(&prod(&pb, &pb), h, w, &win);
        let (e_ab, _, _) = filter_valid(&prod(&pa, &pb), h, w, &win);
        let n = mu_a.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            sum += num / den;
        }
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

/// Centered `size x size` crop; axes shorter than `size` are kept whole.
pub fn central_crop(image: &ImageBuffer, size: usize) -> ImageBuffer {
    let (h, w) = image.dims();
    let ch = size.clamp(1, h);
    let cw = size.clamp(1, w);
    image.crop((h - ch) / 2, (w - cw) / 2, ch, cw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub image_id: String,
    pub psnr: Psnr,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub records: Vec<MetricRecord>,
    /// Mean over finite records; `Identical` only when every record is.
    pub mean_psnr: Psnr,
    pub mean_ssim: f64,
    /// Records whose PSNR is the identical-images marker.
    pub identical: usize,
}

impl MetricSummary {
    pub fn from_records(records: Vec<MetricRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let finite: Vec<f64> = records.iter().filter_map(|r| r.psnr.db()).collect();
        let identical = records.len() - finite.len();
        let mean_psnr = if finite.is_empty() {
            Psnr::Identical
        } else {
            Psnr::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
        };
        let mean_ssim = records.iter().map(|r| r.ssim).sum::<f64>() / records.len() as f64;
        Ok(Self {
            records,
            mean_psnr,
            mean_ssim,
            identical,
        })
    }

    pub fn flagged(&self) -> bool {
        self.identical > 0
    }

    /// `image_id,psnr_db,ssim` rows plus a final `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,psnr_db,ssim\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:.6}\n", r.image_id, r.psnr, r.ssim));
        }
        out.push_str(&format!("MEAN,{},{:.6}\n", self.mean_psnr, self.mean_ssim));
        out
    }
}

pub fn evaluate_pair(id: String, restored: &ImageBuffer, hr: &ImageBuffer, crop: usize) -> Result<MetricRecord> {
    restored.same_dims(hr)?;
    let (out, target) = (central_crop(restored, crop), central_crop(hr, crop));
    Ok(MetricRecord {
        image_id: id,
        psnr: psnr(&out, &target)?,
        ssim: ssim(&out, &target)?,
    })
}

/// Restores each full LR image, then scores the central `crop` window
/// against HR. Records follow manifest order.
pub fn validate<R: Restorer + ?Sized>(model: &R, manifest: &DatasetManifest, crop: usize) -> Result<MetricSummary> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let records = manifest
        .records()
        .par_iter()
        .map(|r| {
            let lr_path = r
                .lr_path
                .as_ref()
                .ok_or_else(|| Error::MissingCounterpart { hr: r.hr_path.clone() })?;
            let lr = load_image(lr_path)?;
            let hr = load_image(&r.hr_path)?;
            let out = model.restore(&lr)?;
            evaluate_pair(r.image_id(), &out, &hr, crop)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricSummary::from_records(records)
}

/// Averages `t^-1(model(t(lr)))` over the 8 dihedral transforms, clamped.
pub fn self_ensemble<R: Restorer + ?Sized>(model: &R, lr: &ImageBuffer) -> Result<ImageBuffer> {
    let mut acc = vec![0.0f64; lr.samples().len()];
    for t in Dihedral::all() {
        let out = t.inverse().apply(&model.restore(&t.apply(lr))?);
        out.same_dims(lr)?;
        for (a, &v) in acc.iter_mut().zip(out.samples()) {
            *a += v as f64;
        }
    }
    let data = acc.into_iter().map(|s| ((s / 8.0) as f32).clamp(0.0, 1.0)).collect();
    ImageBuffer::new(lr.height(), lr.width(), data)
}

/// Wraps a restorer with [`self_ensemble`].
pub struct SelfEnsemble<'a, R: ?Sized>(pub &'a R);

impl<R: Restorer + ?Sized> Restorer for SelfEnsemble<'_, R> {
    fn restore(&self, lr: &ImageBuffer) -> Result<ImageBuffer> {
        self_ensemble(self.0, lr)
    }
}
