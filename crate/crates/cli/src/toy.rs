//! Procedural toy dataset: small RGB scenes from three content families.
//!
//! Images are fully determined by `(seed, index)`. `Smooth` scenes are
//! blended Gaussian blobs over a gradient, `Shapes` are antialiased discs
//! and boxes, and `Texture` scenes are oriented gratings under a smooth
//! envelope.

use std::fs;
use std::path::{Path, PathBuf};

use mixsr::image::save_image;
use mixsr::manifest::{build_manifest, Origin, Split};
use mixsr::rng::Stream;
use mixsr::{DatasetManifest, ImageBuffer, Rng};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Smooth,
    Shapes,
    Texture,
}

const SUPERSAMPLE: usize = 4;

fn color(rng: &mut Rng) -> [f32; 3] {
    [0.1 + 0.8 * rng.uniform() as f32, 0.1 + 0.8 * rng.uniform() as f32, 0.1 + 0.8 * rng.uniform() as f32]
}

fn background(rng: &mut Rng, size: usize) -> ImageBuffer {
    let a = color(rng);
    let b = color(rng);
    let angle = rng.uniform() * std::f64::consts::TAU;
    let (s, c) = angle.sin_cos();
    ImageBuffer::from_fn(size, size, |y, x, ch| {
        let t = ((x as f64 * c + y as f64 * s) / size as f64 * 0.5 + 0.5).clamp(0.0, 1.0) as f32;
        a[ch] * (1.0 - t) + b[ch] * t
    })
}

fn smooth(rng: &mut Rng, size: usize) -> ImageBuffer {
    let mut img = background(rng, size);
    let n = 4 + rng.below(4);
    for _ in 0..n {
        let cy = rng.uniform() * size as f64;
        let cx = rng.uniform() * size as f64;
        let sy = size as f64 * (0.06 + 0.15 * rng.uniform());
        let sx = size as f64 * (0.06 + 0.15 * rng.uniform());
        let col = color(rng);
        let strength = 0.5 + 0.5 * rng.uniform();
        for y in 0..size {
            for x in 0..size {
                let d = ((y as f64 - cy) / sy).powi(2) + ((x as f64 - cx) / sx).powi(2);
                let w = (strength * (-0.5 * d).exp()) as f32;
                for ch in 0..3 {
                    let v = img.get(y, x, ch);
                    img.set(y, x, ch, v * (1.0 - w) + col[ch] * w);
                }
            }
        }
    }
    img
}

enum Shape {
    Disc { cy: f64, cx: f64, r: f64 },
    Rect { top: f64, left: f64, h: f64, w: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { top, left, h, w, cos, sin } => {
                let (dy, dx) = (y - top, x - left);
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                (0.0..=w).contains(&u) && (0.0..=h).contains(&v)
            }
        }
    }
}

fn shapes(rng: &mut Rng, size: usize) -> ImageBuffer {
    let mut img = background(rng, size);
    let n = 5 + rng.below(6);
    let s = size as f64;
    for _ in 0..n {
        let shape = if rng.below(2) == 0 {
            Shape::Disc {
                cy: rng.uniform() * s,
                cx: rng.uniform() * s,
                r: s * (0.05 + 0.15 * rng.uniform()),
            }
        } else {
            let angle = rng.uniform() * std::f64::consts::PI;
            Shape::Rect {
                top: rng.uniform() * s * 0.8,
                left: rng.uniform() * s * 0.8,
                h: s * (0.08 + 0.3 * rng.uniform()),
                w: s * (0.08 + 0.3 * rng.uniform()),
                cos: angle.cos(),
                sin: angle.sin(),
            }
        };
        let col = color(rng);
        for y in 0..size {
            for x in 0..size {
                let mut hits = 0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        hits += shape.contains(py, px) as usize;
                    }
                }
                let w = hits as f32 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
                for ch in 0..3 {
                    let v = img.get(y, x, ch);
                    img.set(y, x, ch, v * (1.0 - w) + col[ch] * w);
                }
            }
        }
    }
    img
}

fn texture(rng: &mut Rng, size: usize) -> ImageBuffer {
    let base = background(rng, size);
    let n = 2 + rng.below(2);
    let gratings: Vec<_> = (0..n)
        .map(|_| {
            let freq = 0.04 + 0.08 * rng.uniform();
            let angle = rng.uniform() * std::f64::consts::PI;
            let phase = rng.uniform() * std::f64::consts::TAU;
            let amp = color(rng).map(|c| 0.08 + 0.15 * c as f64);
            let (cy, cx) = (rng.uniform() * size as f64, rng.uniform() * size as f64);
            let reach = size as f64 * (0.35 + 0.4 * rng.uniform());
            (freq * std::f64::consts::TAU, angle.cos(), angle.sin(), phase, amp, cy, cx, reach)
        })
        .collect();
    let mut img = base;
    for y in 0..size {
        for x in 0..size {
            for &(k, c, s, phase, amp, cy, cx, reach) in &gratings {
                let env = (-((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)) / (2.0 * reach * reach)).exp();
                let wave = (k * (x as f64 * c + y as f64 * s) + phase).sin() * env;
                for (ch, a) in amp.iter().enumerate() {
                    let v = img.get(y, x, ch) as f64 + a * wave;
                    img.set(y, x, ch, v as f32);
                }
            }
        }
    }
    img.clamp01()
}

/// One toy HR image.
pub fn generate(family: Family, size: usize, seed: u64, index: u64) -> ImageBuffer {
    let mut rng = Rng::new(seed).derive(Stream::Sampling, index);
    match family {
        Family::Smooth => smooth(&mut rng, size),
        Family::Shapes => shapes(&mut rng, size),
        Family::Texture => texture(&mut rng, size),
    }
}

/// Roles in the bundled toy layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    Extra,
}

/// The bundled layout: 6 training scenes (smooth and shapes), 2 validation
/// scenes and 8 extra unpaired scenes (both texture-heavy).
pub const LAYOUT: [(Role, Family); 16] = [
    (Role::Train, Family::Smooth),
    (Role::Train, Family::Shapes),
    (Role::Train, Family::Smooth),
    (Role::Train, Family::Shapes),
    (Role::Train, Family::Texture),
    (Role::Train, Family::Shapes),
    (Role::Val, Family::Texture),
    (Role::Val, Family::Shapes),
    (Role::Extra, Family::Texture),
    (Role::Extra, Family::Texture),
    (Role::Extra, Family::Shapes),
    (Role::Extra, Family::Texture),
    (Role::Extra, Family::Smooth),
    (Role::Extra, Family::Texture),
    (Role::Extra, Family::Shapes),
    (Role::Extra, Family::Texture),
];

#[derive(Debug, Clone)]
pub struct ToyImage {
    pub name: String,
    pub role: Role,
    pub family: Family,
    pub image: ImageBuffer,
}

pub fn toy_images(size: usize, seed: u64) -> Vec<ToyImage> {
    LAYOUT
        .iter()
        .enumerate()
        .map(|(i, &(role, family))| ToyImage {
            name: format!("toy_{i:02}"),
            role,
            family,
            image: generate(family, size, seed, i as u64),
        })
        .collect()
}

/// Directories written by [`write_toy_dataset`].
#[derive(Debug, Clone)]
pub struct ToyDirs {
    pub train_hr: PathBuf,
    pub train_lr: PathBuf,
    pub val_hr: PathBuf,
    pub val_lr: PathBuf,
    pub extra_hr: PathBuf,
}

impl ToyDirs {
    pub fn under(root: &Path) -> Self {
        Self {
            train_hr: root.join("train/hr"),
            train_lr: root.join("train/lr"),
            val_hr: root.join("val/hr"),
            val_lr: root.join("val/lr"),
            extra_hr: root.join("extra/hr"),
        }
    }

    pub fn train_manifest(&self) -> mixsr::Result<DatasetManifest> {
        build_manifest(&self.train_hr, Some(&self.train_lr), Split::Train, Origin::Observed)
    }

    pub fn val_manifest(&self) -> mixsr::Result<DatasetManifest> {
        build_manifest(&self.val_hr, Some(&self.val_lr), Split::Val, Origin::Observed)
    }

    pub fn extra_manifest(&self) -> mixsr::Result<DatasetManifest> {
        build_manifest(&self.extra_hr, None, Split::Train, Origin::Observed)
    }
}

/// Writes HR scenes and their degraded LR counterparts as 8-bit PNGs.
///
/// LR images are produced from the quantized HR so that the pair on disk
/// follows the degradation exactly.
pub fn write_toy_dataset(
    root: &Path,
    size: usize,
    seed: u64,
    degradation: &mixsr::degradation::DegradationSpec,
) -> CliResult<ToyDirs> {
    let dirs = ToyDirs::under(root);
    for d in [&dirs.train_hr, &dirs.train_lr, &dirs.val_hr, &dirs.val_lr, &dirs.extra_hr] {
        fs::create_dir_all(d).map_err(|e| mixsr::Error::io(d, e))?;
    }
    for (i, toy) in toy_images(size, seed).into_iter().enumerate() {
        let hr = quantize(&toy.image);
        let file = format!("{}.png", toy.name);
        let (hr_dir, lr_dir) = match toy.role {
            Role::Train => (&dirs.train_hr, Some(&dirs.train_lr)),
            Role::Val => (&dirs.val_hr, Some(&dirs.val_lr)),
            Role::Extra => (&dirs.extra_hr, None),
        };
        save_image(&hr, hr_dir.join(&file))?;
        if let Some(lr_dir) = lr_dir {
            let mut rng = Rng::new(seed).derive(Stream::Noise, i as u64);
            let lr = degradation.apply(&hr, &mut rng)?;
            save_image(&lr, lr_dir.join(&file))?;
        }
    }
    Ok(dirs)
}

/// Rounds to the 8-bit grid, matching what a PNG round trip yields.
pub fn quantize(image: &ImageBuffer) -> ImageBuffer {
    image.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        for family in [Family::Smooth, Family::Shapes, Family::Texture] {
            let a = generate(family, 32, 5, 3);
            assert_eq!(a, generate(family, 32, 5, 3));
            assert_ne!(a, generate(family, 32, 5, 4));
            assert!(a.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn layout_sizes() {
        let count = |r| LAYOUT.iter().filter(|(role, _)| *role == r).count();
        assert_eq!((count(Role::Train), count(Role::Val), count(Role::Extra)), (6, 2, 8));
    }
}
