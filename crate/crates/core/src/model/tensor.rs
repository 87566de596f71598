use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};
use crate::scalar::Scalar;

/// Single-sample feature map, channel-major (C x H x W).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn from_image(image: &ImageBuffer) -> Self {
        let (h, w) = image.dims();
        let mut data = vec![T::zero(); CHANNELS * h * w];
        for (i, px) in image.samples().chunks_exact(CHANNELS).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * h * w + i] = T::from_f64_lossy(v as f64);
            }
        }
        Self {
            channels: CHANNELS,
            height: h,
            width: w,
            data,
        }
    }

    /// Converts a 3-channel tensor back to an image, clamping to [0, 1].
    pub fn to_image(&self) -> Result<ImageBuffer> {
        if self.channels != CHANNELS {
            return Err(Error::ShapeMismatch(format!("{} channels, expected 3", self.channels)));
        }
        let p = self.plane();
        let mut data = Vec::with_capacity(p * CHANNELS);
        for i in 0..p {
            for c in 0..CHANNELS {
                data.push((self.data[c * p + i].to_f64_lossy() as f32).clamp(0.0, 1.0));
            }
        }
        ImageBuffer::new(self.height, self.width, data)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}
