//! The cascading U-Net.
//!
//! ```text
//! head 3x3 (3->C)            ----------------------------+
//!   down 3x3/2 (C->C), ReLU  -----------------+          |
//!     down 3x3/2 (C->C), ReLU                 |          |
//!       global cascade of local cascades,    |          |
//!       each fusion followed by ReLU         |          |
//!     3x3 (C->4C) + pixel shuffle x2  (+) <--+          |
//!   3x3 (C->4C) + pixel shuffle x2    (+) <-------------+
//! tail 3x3 (C->3)  (+ input)
//! ```

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scalar::Scalar;

use super::config::{ModelConfig, INTERNAL_SCALE};
use super::layers::{
    pixel_shuffle, pixel_unshuffle, relu_backward_in_place, relu_in_place, Cascade, CascadeCache, Conv, ConvCache, LayoutBuilder, ParamSpec, Rcab, Unit,
};
use super::tensor::Tensor;

pub type LocalCascade = Cascade<Rcab>;
pub type GlobalCascade = Cascade<LocalCascade>;

#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub head: Conv,
    pub down1: Conv,
    pub down2: Conv,
    pub body: GlobalCascade,
    pub up1: Conv,
    pub up2: Conv,
    pub tail: Conv,
    specs: Vec<ParamSpec>,
}

pub struct ForwardCache<T: Scalar> {
    head: ConvCache<T>,
    down1: ConvCache<T>,
    down2: ConvCache<T>,
    f1: Tensor<T>,
    f2: Tensor<T>,
    body: CascadeCache<T, LocalCascade>,
    up1: ConvCache<T>,
    up2: ConvCache<T>,
    tail: ConvCache<T>,
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let reduction = config.attention_reduction;
        let mut b = LayoutBuilder::default();
        let head = Conv::new(&mut b, "head", 3, c, 3, 1);
        let down1 = Conv::new(&mut b, "down1", c, c, 3, 2);
        let down2 = Conv::new(&mut b, "down2", c, c, 3, 2);
        let body = Cascade::new(&mut b, "body", c, config.num_cascading_blocks, |b, name| {
            Cascade::new(b, name, c, config.rcabs_per_block, |b, name| Rcab::new(b, name, c, reduction))
        });
        let up1 = Conv::new(&mut b, "up1", c, 4 * c, 3, 1);
        let up2 = Conv::new(&mut b, "up2", c, 4 * c, 3, 1);
        let tail = Conv::new(&mut b, "tail", c, 3, 3, 1);
        Ok(Self {
            config,
            head,
            down1,
            down2,
            body,
            up1,
            up2,
            tail,
            specs: b.finish(),
        })
    }

    /// Parameter inventory in storage order.
    pub fn params(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn num_params(&self) -> usize {
        self.specs.iter().map(|s| s.slot.len).sum()
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels != 3 {
            return Err(Error::ShapeMismatch(format!("expected 3 input channels, got {}", x.channels)));
        }
        if x.height % INTERNAL_SCALE != 0 || x.width % INTERNAL_SCALE != 0 || x.height == 0 || x.width == 0 {
            return Err(Error::NotDivisibleBy4 {
                height: x.height,
                width: x.width,
            });
        }
        Ok(())
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters supplied, network has {}",
                params.len(),
                self.num_params()
            )));
        }
        Ok(())
    }

    /// Training forward pass. No clamping.
    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        self.check_params(params)?;
        let (f0, head) = self.head.forward(params, x)?;
        let (mut f1, down1) = self.down1.forward(params, &f0)?;
        relu_in_place(&mut f1);
        let (mut f2, down2) = self.down2.forward(params, &f1)?;
        relu_in_place(&mut f2);
        let (b, body) = self.body.forward(params, &f2)?;
        let (u1c, up1) = self.up1.forward(params, &b)?;
        let mut u1 = pixel_shuffle(&u1c, 2)?;
        if self.config.encoder_skips {
            u1.add_assign(&f1);
        }
        let (u2c, up2) = self.up2.forward(params, &u1)?;
        let mut u2 = pixel_shuffle(&u2c, 2)?;
        if self.config.encoder_skips {
            u2.add_assign(&f0);
        }
        let (mut out, tail) = self.tail.forward(params, &u2)?;
        if self.config.global_skip {
            out.add_assign(x);
        }
        Ok((
            out,
            ForwardCache {
                head,
                down1,
                down2,
                f1,
                f2,
                body,
                up1,
                up2,
                tail,
            },
        ))
    }

    /// Inference pass without retained caches. No clamping.
    pub fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.check_params(params)?;
        let f0 = self.head.infer(params, x)?;
        let mut f1 = self.down1.infer(params, &f0)?;
        relu_in_place(&mut f1);
        let mut f2 = self.down2.infer(params, &f1)?;
        relu_in_place(&mut f2);
        let b = self.body.infer(params, &f2)?;
        drop(f2);
        let mut u1 = pixel_shuffle(&self.up1.infer(params, &b)?, 2)?;
        if self.config.encoder_skips {
            u1.add_assign(&f1);
        }
        let mut u2 = pixel_shuffle(&self.up2.infer(params, &u1)?, 2)?;
        if self.config.encoder_skips {
            u2.add_assign(&f0);
        }
        let mut out = self.tail.infer(params, &u2)?;
        if self.config.global_skip {
            out.add_assign(x);
        }
        Ok(out)
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    pub fn backward<T: Scalar>(&self, params: &[T], cache: &ForwardCache<T>, dout: &Tensor<T>, grads: &mut [T]) -> Result<()> {
        self.check_params(grads)?;
        let (h, w) = (dout.height, dout.width);
        let c = self.config.base_channels;

        let mut du2 = Tensor::zeros(c, h, w);
        self.tail.backward(params, &[], &cache.tail, dout, grads, Some(&mut du2.data));
        let mut du1 = Tensor::zeros(c, h / 2, w / 2);
        self.up2
            .backward(params, &[], &cache.up2, &pixel_unshuffle(&du2, 2)?, grads, Some(&mut du1.data));
        let mut db = Tensor::zeros(c, h / 4, w / 4);
        self.up1
            .backward(params, &[], &cache.up1, &pixel_unshuffle(&du1, 2)?, grads, Some(&mut db.data));
        let mut df2 = self.body.backward(params, &cache.body, &db, grads);
        relu_backward_in_place(&cache.f2, &mut df2);

        let mut df1 = if self.config.encoder_skips {
            du1
        } else {
            Tensor::zeros(c, h / 2, w / 2)
        };
        self.down2.backward(params, &[], &cache.down2, &df2, grads, Some(&mut df1.data));
        relu_backward_in_place(&cache.f1, &mut df1);
        let mut df0 = if self.config.encoder_skips {
            du2
        } else {
            Tensor::zeros(c, h, w)
        };
        self.down1.backward(params, &[], &cache.down1, &df1, grads, Some(&mut df0.data));
        self.head.backward(params, &[], &cache.head, &df0, grads, None);
        Ok(())
    }

    /// Runs on an image and clamps the result to [0, 1].
    pub fn restore_image<T: Scalar>(&self, params: &[T], image: &ImageBuffer) -> Result<ImageBuffer> {
        self.infer(params, &Tensor::from_image(image))?.to_image()
    }
}
