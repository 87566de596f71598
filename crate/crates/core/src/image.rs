//! Image buffers, PNG I/O, cropping and dihedral augmentation.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use image::{ColorType, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const CHANNELS: usize = 3;

/// H x W x 3 image, row-major interleaved RGB, nominal range [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * CHANNELS {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels: if height * width == 0 {
                    0
                } else {
                    data.len() / (height * width)
                },
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Sub-rectangle copy. Panics if the window leaves the image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        assert!(top + height <= self.height && left + width <= self.width && height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in top..top + height {
            let start = (y * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + width * CHANNELS]);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// 8-bit RGB with round-to-nearest quantization of the clamped samples.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("sized buffer")
    }
}

/// Aligned LR/HR buffers of identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    lr: ImageBuffer,
    hr: ImageBuffer,
}

impl ImagePair {
    pub fn new(lr: ImageBuffer, hr: ImageBuffer) -> Result<Self> {
        lr.same_dims(&hr)?;
        Ok(Self { lr, hr })
    }

    pub fn lr(&self) -> &ImageBuffer {
        &self.lr
    }

    pub fn hr(&self) -> &ImageBuffer {
        &self.hr
    }

    pub fn dims(&self) -> (usize, usize) {
        self.lr.dims()
    }

    pub fn into_parts(self) -> (ImageBuffer, ImageBuffer) {
        (self.lr, self.hr)
    }

    /// Pair with the roles of the two planes exchanged.
    pub fn swapped(self) -> Self {
        Self {
            lr: self.hr,
            hr: self.lr,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = ImageReader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: "not a PNG file".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: u.to_string(),
        },
        other => Error::CorruptFile {
            path: path.to_owned(),
            reason: other.to_string(),
        },
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f32> = match decoded.color() {
        ColorType::Rgb8 => decoded
            .into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
        ColorType::Rgb16 => decoded
            .into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_owned(),
                reason: format!("color type {other:?}, expected 8/16-bit RGB"),
            })
        }
    };
    ImageBuffer::new(height, width, data)
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    image
        .to_rgb8()
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::CorruptFile {
                path: path.to_owned(),
                reason: other.to_string(),
            },
        })
}

/// Number of windows along one axis.
pub fn window_count(extent: usize, size: usize, stride: usize) -> usize {
    if size > extent || stride == 0 {
        0
    } else {
        (extent - size) / stride + 1
    }
}

/// Sliding-window sub-images in row-major anchor order. Remainder pixels
/// not covered by a full window are dropped.
pub fn crop_subimages(image: &ImageBuffer, size: usize, stride: usize) -> Result<Vec<ImageBuffer>> {
    if stride == 0 {
        return Err(Error::InvalidStride);
    }
    if size == 0 || size > image.height || size > image.width {
        return Err(Error::SizeExceedsImage {
            size,
            height: image.height,
            width: image.width,
        });
    }
    let rows = window_count(image.height, size, stride);
    let cols = window_count(image.width, size, stride);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(image.crop(i * stride, j * stride, size, size));
        }
    }
    Ok(out)
}

/// Element of the dihedral group D4 acting on images.
///
/// Ids 0..4 are counter-clockwise rotations by `id * 90` degrees; ids 4..8
/// are a rotation by `(id - 4) * 90` degrees followed by a horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral(u8);

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral(0);

    pub fn new(id: u8) -> Result<Self> {
        if id < 8 {
            Ok(Self(id))
        } else {
            Err(Error::InvalidTransformId(id))
        }
    }

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8).map(Dihedral)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    fn flip(self) -> bool {
        self.0 >= 4
    }

    fn quarter_turns(self) -> u8 {
        self.0 % 4
    }

    fn from_parts(flip: bool, turns: u8) -> Self {
        Self(turns % 4 + if flip { 4 } else { 0 })
    }

    pub fn inverse(self) -> Self {
        if self.flip() {
            self
        } else {
            Self::from_parts(false, (4 - self.quarter_turns()) % 4)
        }
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(self, other: Dihedral) -> Dihedral {
        // H^f R^k with R^k H = H R^-k
        let (fa, ka) = (self.flip(), self.quarter_turns());
        let (fb, kb) = (other.flip(), other.quarter_turns());
        if fb {
            Self::from_parts(!fa, (kb + 4 - ka) % 4)
        } else {
            Self::from_parts(fa, ka + kb)
        }
    }

    /// Dimensions after applying the transform to an `h x w` image.
    pub fn output_dims(self, (h, w): (usize, usize)) -> (usize, usize) {
        if self.quarter_turns() % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where pixel `(y, x)` of an `h x w` image lands after the transform.
    pub fn map_coord(self, (h, w): (usize, usize), (y, x): (usize, usize)) -> (usize, usize) {
        let (mut y, mut x, mut h, mut w) = (y, x, h, w);
        for _ in 0..self.quarter_turns() {
            (y, x) = (w - 1 - x, y);
            (h, w) = (w, h);
        }
        if self.flip() {
            x = w - 1 - x;
        }
        (y, x)
    }

    pub fn apply(self, image: &ImageBuffer) -> ImageBuffer {
        let mut out = image.clone();
        for _ in 0..self.quarter_turns() {
            out = rot90(&out);
        }
        if self.flip() {
            out = hflip(&out);
        }
        out
    }
}

pub fn dihedral_transform(image: &ImageBuffer, transform_id: u8) -> Result<ImageBuffer> {
    Ok(Dihedral::new(transform_id)?.apply(image))
}

fn rot90(image: &ImageBuffer) -> ImageBuffer {
    let (h, w) = image.dims();
    // counter-clockwise: out[i][j] = in[j][w - 1 - i]
    ImageBuffer::from_fn(w, h, |i, j, c| image.get(j, w - 1 - i, c))
}

fn hflip(image: &ImageBuffer) -> ImageBuffer {
    let (h, w) = image.dims();
    ImageBuffer::from_fn(h, w, |i, j, c| image.get(i, w - 1 - j, c))
}

/// Co-located random crop of both planes, anchor uniform over valid positions.
pub fn random_patch(pair: &ImagePair, patch_size: usize, rng: &mut Rng) -> Result<ImagePair> {
    let (top, left) = random_anchor(pair.dims(), patch_size, rng)?;
    Ok(ImagePair {
        lr: pair.lr.crop(top, left, patch_size, patch_size),
        hr: pair.hr.crop(top, left, patch_size, patch_size),
    })
}

/// Equivalent to `random_patch(&transform.apply(pair), ..)` for a random
/// transform, but only the selected window is transformed.
pub fn random_augmented_patch(pair: &ImagePair, patch_size: usize, rng: &mut Rng) -> Result<ImagePair> {
    let t = Dihedral::new(rng.below(8) as u8)?;
    let dims = pair.dims();
    let (top, left) = random_anchor(t.output_dims(dims), patch_size, rng)?;
    // locate the source window by mapping opposite corners back
    let inv = t.inverse();
    let out_dims = t.output_dims(dims);
    let a = inv.map_coord(out_dims, (top, left));
    let b = inv.map_coord(out_dims, (top + patch_size - 1, left + patch_size - 1));
    let (sy, sx) = (a.0.min(b.0), a.1.min(b.1));
    Ok(ImagePair {
        lr: t.apply(&pair.lr.crop(sy, sx, patch_size, patch_size)),
        hr: t.apply(&pair.hr.crop(sy, sx, patch_size, patch_size)),
    })
}

/// The anchor `random_patch` would use, exposed for statistics.
pub fn random_anchor((height, width): (usize, usize), patch_size: usize, rng: &mut Rng) -> Result<(usize, usize)> {
    if patch_size == 0 || patch_size > height || patch_size > width {
        return Err(Error::PatchTooLarge {
            patch: patch_size,
            height,
            width,
        });
    }
    let top = rng.below(height - patch_size + 1);
    let left = rng.below(width - patch_size + 1);
    Ok((top, left))
}
