//! Layer primitives with explicit forward caches and backward passes.
//!
//! Parameters live in one flat slice; each layer holds [`ParamRef`]s into
//! it. Backward passes accumulate into a gradient slice of the same layout.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub offset: usize,
    pub len: usize,
}

impl ParamRef {
    #[inline]
    pub fn of<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, T>(&self, params: &'a mut [T]) -> &'a mut [T] {
        &mut params[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution kernel with the given fan-in.
    Kernel { fan_in: usize },
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub slot: ParamRef,
}

/// Hands out consecutive parameter slots in construction order.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl LayoutBuilder {
    pub fn alloc(&mut self, name: String, shape: Vec<usize>, kind: ParamKind) -> ParamRef {
        let len = shape.iter().product();
        let slot = ParamRef {
            offset: self.total,
            len,
        };
        self.total += len;
        self.specs.push(ParamSpec {
            name,
            shape,
            kind,
            slot,
        });
        slot
    }

    pub fn finish(self) -> Vec<ParamSpec> {
        self.specs
    }
}

/// Square convolution, zero padding `k / 2`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: ParamRef,
    pub bias: ParamRef,
}

/// im2col buffer of a convolution; empty for pointwise convolutions, whose
/// backward pass reads the layer input instead.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    height: usize,
    width: usize,
}

impl Conv {
    pub fn new(b: &mut LayoutBuilder, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize) -> Self {
        let weight = b.alloc(
            format!("{name}.weight"),
            vec![cout, cin, kernel, kernel],
            ParamKind::Kernel {
                fan_in: cin * kernel * kernel,
            },
        );
        let bias = b.alloc(format!("{name}.bias"), vec![cout], ParamKind::Bias);
        Self {
            cin,
            cout,
            kernel,
            stride,
            weight,
            bias,
        }
    }

    fn pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        (
            (h + 2 * pad - self.kernel) / self.stride + 1,
            (w + 2 * pad - self.kernel) / self.stride + 1,
        )
    }

    fn check_input<T>(&self, input: &[T], h: usize, w: usize) -> Result<()> {
        if input.len() != self.cin * h * w {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} channels of {h}x{w}, got {} values",
                self.cin,
                input.len()
            )));
        }
        Ok(())
    }

    fn im2col<T: Scalar>(&self, input: &[T], h: usize, w: usize) -> Vec<T> {
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        let n = oh * ow;
        let mut cols = vec![T::zero(); self.cin * k * k * n];
        for ci in 0..self.cin {
            let plane = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[oy * ow..][..ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im_add<T: Scalar>(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        let n = oh * ow;
        for ci in 0..self.cin {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        let src = &row[oy * ow..][..ow];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] = dst[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn apply<T: Scalar>(&self, params: &[T], cols: &[T], n: usize) -> Vec<T> {
        let kk = self.cin * self.kernel * self.kernel;
        let mut out = vec![T::zero(); self.cout * n];
        for (co, &b) in self.bias.of(params).iter().enumerate() {
            out[co * n..(co + 1) * n].iter_mut().for_each(|v| *v = b);
        }
        T::gemm(
            self.cout,
            kk,
            n,
            T::one(),
            self.weight.of(params),
            (kk as isize, 1),
            cols,
            (n as isize, 1),
            T::one(),
            &mut out,
            (n as isize, 1),
        );
        out
    }

    /// Forward on a raw channel-major slice of `cin x h x w` values.
    pub fn forward_raw<T: Scalar>(&self, params: &[T], input: &[T], h: usize, w: usize) -> Result<(Tensor<T>, ConvCache<T>)> {
        self.check_input(input, h, w)?;
        let (oh, ow) = self.out_dims(h, w);
        let (out, cols) = if self.pointwise() {
            (self.apply(params, input, oh * ow), Vec::new())
        } else {
            let cols = self.im2col(input, h, w);
            (self.apply(params, &cols, oh * ow), cols)
        };
        let cache = ConvCache {
            cols,
            height: h,
            width: w,
        };
        Ok((Tensor::from_vec(self.cout, oh, ow, out)?, cache))
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        self.forward_raw(params, &x.data, x.height, x.width)
    }

    pub fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(params, x)?.0)
    }

    /// Accumulates parameter gradients and, when `dx` is given, adds the
    /// input gradient into it. `input` is only read for pointwise layers.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        input: &[T],
        cache: &ConvCache<T>,
        dout: &Tensor<T>,
        grads: &mut [T],
        dx: Option<&mut [T]>,
    ) {
        let (h, w) = (cache.height, cache.width);
        let n = dout.plane();
        let kk = self.cin * self.kernel * self.kernel;
        let cols: &[T] = if self.pointwise() { input } else { &cache.cols };
        debug_assert_eq!(cols.len(), kk * n);

        T::gemm(
            self.cout,
            n,
            kk,
            T::one(),
            &dout.data,
            (n as isize, 1),
            cols,
            (1, n as isize),
            T::one(),
            self.weight.of_mut(grads),
            (kk as isize, 1),
        );
        for (co, g) in self.bias.of_mut(grads).iter_mut().enumerate() {
            *g = *g + dout.channel(co).iter().copied().sum::<T>();
        }

        let Some(dx) = dx else { return };
        let weight = self.weight.of(params);
        if self.pointwise() {
            T::gemm(
                kk,
                self.cout,
                n,
                T::one(),
                weight,
                (1, kk as isize),
                &dout.data,
                (n as isize, 1),
                T::one(),
                dx,
                (n as isize, 1),
            );
        } else {
            let mut dcols = vec![T::zero(); kk * n];
            T::gemm(
                kk,
                self.cout,
                n,
                T::one(),
                weight,
                (1, kk as isize),
                &dout.data,
                (n as isize, 1),
                T::zero(),
                &mut dcols,
                (n as isize, 1),
            );
            self.col2im_add(&dcols, h, w, dx);
        }
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut Tensor<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_in_place<T: Scalar>(activated: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &a) in grad.data.iter_mut().zip(&activated.data) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Sub-pixel rearrangement `(C r^2, h, w) -> (C, r h, r w)`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if r == 0 || x.channels % (r * r) != 0 {
        return Err(Error::ChannelsNotDivisible {
            channels: x.channels,
            divisor: r * r,
        });
    }
    let (c, h, w) = (x.channels / (r * r), x.height, x.width);
    let (oh, ow) = (h * r, w * r);
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let src = ch * r * r + (y % r) * r + (xo % r);
                out.data[(ch * oh + y) * ow + xo] = x.data[(src * h + y / r) * w + xo / r];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`], which is also its gradient.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if r == 0 || x.height % r != 0 || x.width % r != 0 {
        return Err(Error::ShapeMismatch(format!("{}x{} not divisible by {r}", x.height, x.width)));
    }
    let (c, oh, ow) = (x.channels, x.height, x.width);
    let (h, w) = (oh / r, ow / r);
    let mut out = Tensor::zeros(c * r * r, h, w);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let dst = ch * r * r + (y % r) * r + (xo % r);
                out.data[(dst * h + y / r) * w + xo / r] = x.data[(ch * oh + y) * ow + xo];
            }
        }
    }
    Ok(out)
}

/// Squeeze-and-excitation gate: pool, 1x1 down, ReLU, 1x1 up, sigmoid.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub channels: usize,
    pub squeezed: usize,
    pub down_w: ParamRef,
    pub down_b: ParamRef,
    pub up_w: ParamRef,
    pub up_b: ParamRef,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pooled: Vec<T>,
    hidden: Vec<T>,
    scale: Vec<T>,
}

impl<T> AttentionCache<T> {
    pub fn scale(&self) -> &[T] {
        &self.scale
    }
}

impl ChannelAttention {
    pub fn new(b: &mut LayoutBuilder, name: &str, channels: usize, reduction: usize) -> Self {
        let squeezed = channels / reduction;
        let down_w = b.alloc(
            format!("{name}.down.weight"),
            vec![squeezed, channels, 1, 1],
            ParamKind::Kernel { fan_in: channels },
        );
        let down_b = b.alloc(format!("{name}.down.bias"), vec![squeezed], ParamKind::Bias);
        let up_w = b.alloc(
            format!("{name}.up.weight"),
            vec![channels, squeezed, 1, 1],
            ParamKind::Kernel { fan_in: squeezed },
        );
        let up_b = b.alloc(format!("{name}.up.bias"), vec![channels], ParamKind::Bias);
        Self {
            channels,
            squeezed,
            down_w,
            down_b,
            up_w,
            up_b,
        }
    }

    /// Per-channel scales in (0, 1).
    pub fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Vec<T>, AttentionCache<T>)> {
        if x.channels != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "attention expects {} channels, got {}",
                self.channels, x.channels
            )));
        }
        let n = T::from_usize(x.plane()).expect("plane size");
        let pooled: Vec<T> = (0..self.channels)
            .map(|c| x.channel(c).iter().copied().sum::<T>() / n)
            .collect();
        let (dw, db) = (self.down_w.of(params), self.down_b.of(params));
        let hidden: Vec<T> = (0..self.squeezed)
            .map(|j| {
                let z = db[j]
                    + dw[j * self.channels..(j + 1) * self.channels]
                        .iter()
                        .zip(&pooled)
                        .map(|(&a, &b)| a * b)
                        .sum::<T>();
                z.max(T::zero())
            })
            .collect();
        let (uw, ub) = (self.up_w.of(params), self.up_b.of(params));
        let scale: Vec<T> = (0..self.channels)
            .map(|c| {
                let z = ub[c]
                    + uw[c * self.squeezed..(c + 1) * self.squeezed]
                        .iter()
                        .zip(&hidden)
                        .map(|(&a, &b)| a * b)
                        .sum::<T>();
                T::one() / (T::one() + (-z).exp())
            })
            .collect();
        Ok((
            scale.clone(),
            AttentionCache {
                pooled,
                hidden,
                scale,
            },
        ))
    }

    /// Given d(loss)/d(scale), accumulates parameter gradients and returns
    /// d(loss)/d(pooled input); the caller spreads it over each plane.
    pub fn backward<T: Scalar>(&self, params: &[T], cache: &AttentionCache<T>, dscale: &[T], grads: &mut [T]) -> Vec<T> {
        let (c, sq) = (self.channels, self.squeezed);
        let dz2: Vec<T> = dscale
            .iter()
            .zip(&cache.scale)
            .map(|(&g, &s)| g * s * (T::one() - s))
            .collect();
        {
            let guw = self.up_w.of_mut(grads);
            for ch in 0..c {
                for j in 0..sq {
                    guw[ch * sq + j] = guw[ch * sq + j] + dz2[ch] * cache.hidden[j];
                }
            }
        }
        for (g, &d) in self.up_b.of_mut(grads).iter_mut().zip(&dz2) {
            *g = *g + d;
        }
        let uw = self.up_w.of(params);
        let dz1: Vec<T> = (0..sq)
            .map(|j| {
                if cache.hidden[j] > T::zero() {
                    (0..c).map(|ch| uw[ch * sq + j] * dz2[ch]).sum::<T>()
                } else {
                    T::zero()
                }
            })
            .collect();
        {
            let gdw = self.down_w.of_mut(grads);
            for j in 0..sq {
                for ch in 0..c {
                    gdw[j * c + ch] = gdw[j * c + ch] + dz1[j] * cache.pooled[ch];
                }
            }
        }
        for (g, &d) in self.down_b.of_mut(grads).iter_mut().zip(&dz1) {
            *g = *g + d;
        }
        let dw = self.down_w.of(params);
        (0..c)
            .map(|ch| (0..sq).map(|j| dw[j * c + ch] * dz1[j]).sum::<T>())
            .collect()
    }
}

/// A shape-preserving block usable inside a cascade.
pub trait Unit {
    type Cache<T: Scalar>;

    fn channels(&self) -> usize;

    fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, Self::Cache<T>)>;

    fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(params, x)?.0)
    }

    /// Accumulates parameter gradients, returns d(loss)/d(input).
    fn backward<T: Scalar>(&self, params: &[T], cache: &Self::Cache<T>, dout: &Tensor<T>, grads: &mut [T]) -> Tensor<T>;
}

/// Residual channel attention block:
/// `x + CA(u) * u` with `u = conv(relu(conv(x)))`.
#[derive(Debug, Clone)]
pub struct Rcab {
    pub conv1: Conv,
    pub conv2: Conv,
    pub attention: ChannelAttention,
}

#[derive(Debug, Clone)]
pub struct RcabCache<T> {
    conv1: ConvCache<T>,
    activated: Tensor<T>,
    conv2: ConvCache<T>,
    branch: Tensor<T>,
    attention: AttentionCache<T>,
}

impl Rcab {
    pub fn new(b: &mut LayoutBuilder, name: &str, channels: usize, reduction: usize) -> Self {
        Self {
            conv1: Conv::new(b, &format!("{name}.conv1"), channels, channels, 3, 1),
            conv2: Conv::new(b, &format!("{name}.conv2"), channels, channels, 3, 1),
            attention: ChannelAttention::new(b, &format!("{name}.attention"), channels, reduction),
        }
    }
}

impl Unit for Rcab {
    type Cache<T: Scalar> = RcabCache<T>;

    fn channels(&self) -> usize {
        self.conv1.cin
    }

    fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, RcabCache<T>)> {
        let (mut activated, conv1) = self.conv1.forward(params, x)?;
        relu_in_place(&mut activated);
        let (branch, conv2) = self.conv2.forward(params, &activated)?;
        let (scale, attention) = self.attention.forward(params, &branch)?;
        let mut out = x.clone();
        let p = x.plane();
        for (c, &s) in scale.iter().enumerate() {
            for (o, &u) in out.data[c * p..(c + 1) * p].iter_mut().zip(branch.channel(c)) {
                *o = *o + s * u;
            }
        }
        Ok((
            out,
            RcabCache {
                conv1,
                activated,
                conv2,
                branch,
                attention,
            },
        ))
    }

    fn backward<T: Scalar>(&self, params: &[T], cache: &RcabCache<T>, dout: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let p = dout.plane();
        let scale = cache.attention.scale();
        let mut dbranch = Tensor::zeros(dout.channels, dout.height, dout.width);
        let mut dscale = Vec::with_capacity(dout.channels);
        for c in 0..dout.channels {
            let g = dout.channel(c);
            let u = cache.branch.channel(c);
            dscale.push(g.iter().zip(u).map(|(&a, &b)| a * b).sum::<T>());
            for (d, &gv) in dbranch.data[c * p..(c + 1) * p].iter_mut().zip(g) {
                *d = gv * scale[c];
            }
        }
        let dpooled = self.attention.backward(params, &cache.attention, &dscale, grads);
        let n = T::from_usize(p).expect("plane size");
        for (c, &dp) in dpooled.iter().enumerate() {
            let share = dp / n;
            dbranch.data[c * p..(c + 1) * p].iter_mut().for_each(|d| *d = *d + share);
        }

        let mut dact = Tensor::zeros(dout.channels, dout.height, dout.width);
        self.conv2
            .backward(params, &cache.activated.data, &cache.conv2, &dbranch, grads, Some(&mut dact.data));
        relu_backward_in_place(&cache.activated, &mut dact);
        let mut dx = dout.clone();
        // conv1 is 3x3, so its input is recovered from the im2col cache
        self.conv1.backward(params, &[], &cache.conv1, &dact, grads, Some(&mut dx.data));
        dx
    }
}

/// Cascading block: after unit `k`, all accumulated outputs (input and
/// units `0..=k`) are concatenated and fused back to `C` channels by a 1x1
/// convolution, which feeds the next unit.
#[derive(Debug, Clone)]
pub struct Cascade<U> {
    pub units: Vec<U>,
    pub fusions: Vec<Conv>,
}

#[derive(Debug)]
pub struct CascadeCache<T: Scalar, U: Unit> {
    concat: Vec<T>,
    units: Vec<U::Cache<T>>,
    fusions: Vec<ConvCache<T>>,
    /// Rectified fusion outputs.
    fused: Vec<Tensor<T>>,
}

impl<U: Unit> Cascade<U> {
    pub fn new(b: &mut LayoutBuilder, name: &str, channels: usize, count: usize, mut make_unit: impl FnMut(&mut LayoutBuilder, &str) -> U) -> Self {
        let mut units = Vec::with_capacity(count);
        let mut fusions = Vec::with_capacity(count);
        for k in 0..count {
            units.push(make_unit(b, &format!("{name}.unit{k}")));
            fusions.push(Conv::new(b, &format!("{name}.fuse{k}"), (k + 2) * channels, channels, 1, 1));
        }
        Self { units, fusions }
    }
}

impl<U: Unit> Unit for Cascade<U> {
    type Cache<T: Scalar> = CascadeCache<T, U>;

    fn channels(&self) -> usize {
        self.fusions[0].cout
    }

    fn forward<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<(Tensor<T>, CascadeCache<T, U>)> {
        let c = self.channels();
        if x.channels != c {
            return Err(Error::ShapeMismatch(format!("cascade expects {c} channels, got {}", x.channels)));
        }
        let (h, w) = (x.height, x.width);
        let mut concat = Vec::with_capacity(x.data.len() * (self.units.len() + 1));
        concat.extend_from_slice(&x.data);
        let mut unit_caches = Vec::with_capacity(self.units.len());
        let mut fusion_caches = Vec::with_capacity(self.units.len());
        let mut fused_outputs: Vec<Tensor<T>> = Vec::with_capacity(self.units.len());
        for (unit, fusion) in self.units.iter().zip(&self.fusions) {
            let (out, cache) = unit.forward(params, fused_outputs.last().unwrap_or(x))?;
            unit_caches.push(cache);
            concat.extend_from_slice(&out.data);
            let (mut fused, fcache) = fusion.forward_raw(params, &concat, h, w)?;
            relu_in_place(&mut fused);
            fusion_caches.push(fcache);
            fused_outputs.push(fused);
        }
        Ok((
            fused_outputs.last().expect("at least one unit").clone(),
            CascadeCache {
                concat,
                units: unit_caches,
                fusions: fusion_caches,
                fused: fused_outputs,
            },
        ))
    }

    fn infer<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (x.height, x.width);
        let mut concat = x.data.clone();
        let mut current = None::<Tensor<T>>;
        for (unit, fusion) in self.units.iter().zip(&self.fusions) {
            let out = unit.infer(params, current.as_ref().unwrap_or(x))?;
            concat.extend_from_slice(&out.data);
            let mut fused = fusion.forward_raw(params, &concat, h, w)?.0;
            relu_in_place(&mut fused);
            current = Some(fused);
        }
        Ok(current.expect("at least one unit"))
    }

    fn backward<T: Scalar>(&self, params: &[T], cache: &CascadeCache<T, U>, dout: &Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let c = self.channels();
        let (h, w) = (dout.height, dout.width);
        let group = c * h * w;
        let mut dconcat = vec![T::zero(); cache.concat.len()];
        let mut dcurrent = dout.clone();
        for k in (0..self.units.len()).rev() {
            relu_backward_in_place(&cache.fused[k], &mut dcurrent);
            let width = (k + 2) * group;
            self.fusions[k].backward(
                params,
                &cache.concat[..width],
                &cache.fusions[k],
                &dcurrent,
                grads,
                Some(&mut dconcat[..width]),
            );
            let dunit = Tensor {
                channels: c,
                height: h,
                width: w,
                data: dconcat[(k + 1) * group..(k + 2) * group].to_vec(),
            };
            dcurrent = self.units[k].backward(params, &cache.units[k], &dunit, grads);
        }
        for (d, &g) in dcurrent.data.iter_mut().zip(&dconcat[..group]) {
            *d = *d + g;
        }
        dcurrent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_shuffle_examples() {
        let x = Tensor::<f64>::from_vec(4, 1, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), (1, 2, 2));
        assert_eq!(y.data, vec![1.0, 2.0, 3.0, 4.0]);

        let x = Tensor::<f32>::from_vec(16, 4, 4, (0..256).map(|v| v as f32).collect()).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), (4, 8, 8));
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert_eq!(pixel_unshuffle(&y, 2).unwrap(), x);
        assert!(matches!(pixel_shuffle(&x, 3), Err(Error::ChannelsNotDivisible { .. })));
    }

    #[test]
    fn pixel_shuffle_index_formula() {
        let (c, h, w, r) = (2, 3, 2, 2);
        let x = Tensor::<f64>::from_vec(c * r * r, h, w, (0..c * r * r * h * w).map(|v| v as f64).collect()).unwrap();
        let y = pixel_shuffle(&x, r).unwrap();
        for ch in 0..c {
            for yy in 0..h * r {
                for xx in 0..w * r {
                    let src = ch * r * r + (yy % r) * r + xx % r;
                    let expected = x.data[(src * h + yy / r) * w + xx / r];
                    assert_eq!(y.data[(ch * h * r + yy) * w * r + xx], expected);
                }
            }
        }
    }

    fn naive_conv(conv: &Conv, params: &[f64], x: &Tensor<f64>) -> Tensor<f64> {
        let (oh, ow) = conv.out_dims(x.height, x.width);
        let pad = conv.kernel as isize / 2;
        let k = conv.kernel;
        let wgt = conv.weight.of(params);
        let bias = conv.bias.of(params);
        let mut out = Tensor::zeros(conv.cout, oh, ow);
        for co in 0..conv.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..conv.cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - pad;
                                let ix = (ox * conv.stride + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                acc += wgt[((co * conv.cin + ci) * k + ky) * k + kx]
                                    * x.data[(ci * x.height + iy as usize) * x.width + ix as usize];
                            }
                        }
                    }
                    out.data[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_evaluation() {
        for (k, s) in [(3, 1), (3, 2), (1, 1)] {
            let mut b = LayoutBuilder::default();
            let conv = Conv::new(&mut b, "c", 3, 5, k, s);
            let total: usize = b.finish().iter().map(|p| p.slot.len).sum();
            let params: Vec<f64> = (0..total).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
            let x = Tensor::from_vec(3, 6, 8, (0..144).map(|i| ((i * 31) % 17) as f64 / 17.0).collect()).unwrap();
            let (y, _) = conv.forward(&params, &x).unwrap();
            let reference = naive_conv(&conv, &params, &x);
            assert_eq!(y.shape(), reference.shape());
            for (a, b) in y.data.iter().zip(&reference.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        let mut b = LayoutBuilder::default();
        let conv = Conv::new(&mut b, "down", 4, 4, 3, 2);
        assert_eq!(conv.out_dims(8, 12), (4, 6));
        assert_eq!(conv.out_dims(2, 2), (1, 1));
    }
}
