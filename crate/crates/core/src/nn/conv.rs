use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{shape_str, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that the output is `ceil(H / stride)` by `ceil(W / stride)`.
    Same,
    Valid,
}

/// Spatial bookkeeping shared by the forward and transposed convolutions.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(
        channels: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (out_h, pad_top) = axis(h, kh, stride, padding)?;
        let (out_w, pad_left) = axis(w, kw, stride, padding)?;
        Ok(Geometry {
            channels,
            h,
            w,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }

    /// Output columns `ox` whose input column `ox * stride + kj - pad` lies inside the image.
    fn valid_range(&self, k: usize, pad: usize, extent: usize, out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - pad as isize;
        // ox * s + off >= 0  and  ox * s + off <= extent - 1
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi_incl = (extent as isize - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out as isize);
        (lo.min(out as isize) as usize, hi.max(lo.min(out as isize)) as usize)
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.col_cols();
        for c in 0..self.channels {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(ki, self.pad_top, self.h, self.out_h);
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    dst.fill(T::zero());
                    let (xl, xh) = self.valid_range(kj, self.pad_left, self.w, self.out_w);
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.pad_top;
                        let src_row = &plane[iy * self.w..(iy + 1) * self.w];
                        let drow = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if self.stride == 1 {
                            let ix0 = xl + kj - self.pad_left;
                            drow[xl..xh].copy_from_slice(&src_row[ix0..ix0 + (xh - xl)]);
                        } else {
                            for ox in xl..xh {
                                drow[ox] = src_row[ox * self.stride + kj - self.pad_left];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns back into an image buffer (adjoint of `im2col`).
    fn col2im<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let p = self.col_cols();
        for c in 0..self.channels {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(ki, self.pad_top, self.h, self.out_h);
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    let (xl, xh) = self.valid_range(kj, self.pad_left, self.w, self.out_w);
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.pad_top;
                        let drow = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let srow = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        for ox in xl..xh {
                            drow[ox * self.stride + kj - self.pad_left] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

fn axis(n: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if n < k {
                return Err(Error::shape(
                    "conv2d",
                    format!("spatial extent >= kernel size {k}"),
                    n,
                ));
            }
            Ok(((n - k) / stride + 1, 0))
        }
    }
}

fn check_kernel(weight: &Tensor<impl Real>, bias_len: usize, bias_expected: usize, stride: usize) -> Result<()> {
    if weight.ndim() != 4 {
        return Err(Error::shape("conv2d", "kernel [out, in, kh, kw]", shape_str(weight.shape())));
    }
    let s = weight.shape();
    if s[2] == 0 || s[3] == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel {}x{} with stride {stride}; all must be >= 1",
            s[2], s[3]
        )));
    }
    if bias_len != bias_expected {
        return Err(Error::shape("conv2d", format!("bias of {bias_expected}"), bias_len));
    }
    Ok(())
}

/// Fan-in scaled Gaussian initialization: std = sqrt(2 / (in * kh * kw)).
pub fn he_normal<T: Real, R: Rng + ?Sized>(shape: [usize; 4], fan_in: usize, rng: &mut R) -> Tensor<T> {
    Tensor::randn(&shape, (2.0 / fan_in as f64).sqrt(), rng)
}

/// 2D convolution (cross-correlation) with kernels `[out, in, kh, kw]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T = f64> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    input: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            weight: he_normal([out_channels, in_channels, kernel, kernel], fan_in, rng),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding) -> Result<Self> {
        check_kernel(&weight, bias.len(), weight.shape().first().copied().unwrap_or(0), stride)?;
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<(usize, Geometry)> {
        let (b, c, h, w) = x.dims4("conv2d")?;
        if c != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!("{} input channels", self.in_channels()),
                format!("{c} channels in input {}", shape_str(x.shape())),
            ));
        }
        let (kh, kw) = self.kernel();
        Ok((b, Geometry::new(c, h, w, kh, kw, self.stride, self.padding)?))
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        match *input_shape {
            [b, c, h, w] => {
                if c != self.in_channels() {
                    return Err(Error::shape("conv2d", self.in_channels(), c));
                }
                let (kh, kw) = self.kernel();
                let g = Geometry::new(c, h, w, kh, kw, self.stride, self.padding)?;
                Ok(vec![b, self.out_channels(), g.out_h, g.out_w])
            }
            _ => Err(Error::shape("conv2d", "rank-4 [B,C,H,W]", shape_str(input_shape))),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (b, g) = self.geometry(x)?;
        let o = self.out_channels();
        let (rows, p) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros(&[b, o, g.out_h, g.out_w]);
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * p] };
        for i in 0..b {
            let xi = x.item_slice(i);
            let src: &[T] = if g.is_pointwise() {
                xi
            } else {
                g.im2col(xi, &mut cols);
                &cols
            };
            let yi = out.item_slice_mut(i);
            for (oc, chunk) in yi.chunks_mut(p).enumerate() {
                chunk.fill(self.bias.data()[oc]);
            }
            T::gemm(o, rows, p, T::one(), self.weight.data(), (rows as isize, 1), src, (p as isize, 1), T::one(), yi, p as isize);
        }
        Ok((out, ConvCache { input: x.clone() }))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, cache: &ConvCache<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let x = &cache.input;
        let (b, g) = self.geometry(x)?;
        let o = self.out_channels();
        let expected = [b, o, g.out_h, g.out_w];
        if grad_out.shape() != expected {
            return Err(Error::shape("conv2d_backward", shape_str(&expected), shape_str(grad_out.shape())));
        }
        let (rows, p) = (g.col_rows(), g.col_cols());
        let mut grad_in = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); rows * p];
        let mut grad_cols = vec![T::zero(); rows * p];
        for i in 0..b {
            let gi = grad_out.item_slice(i);
            for (oc, chunk) in gi.chunks(p).enumerate() {
                grads.bias.data_mut()[oc] += chunk.iter().copied().sum();
            }
            let xi = x.item_slice(i);
            if g.is_pointwise() {
                T::gemm(o, p, rows, T::one(), gi, (p as isize, 1), xi, (1, p as isize), T::one(), grads.weight.data_mut(), rows as isize);
                let gx = grad_in.item_slice_mut(i);
                T::gemm(rows, o, p, T::one(), self.weight.data(), (1, rows as isize), gi, (p as isize, 1), T::zero(), gx, p as isize);
            } else {
                g.im2col(xi, &mut cols);
                T::gemm(o, p, rows, T::one(), gi, (p as isize, 1), &cols, (1, p as isize), T::one(), grads.weight.data_mut(), rows as isize);
                T::gemm(rows, o, p, T::one(), self.weight.data(), (1, rows as isize), gi, (p as isize, 1), T::zero(), &mut grad_cols, p as isize);
                g.col2im(&grad_cols, grad_in.item_slice_mut(i));
            }
        }
        Ok(grad_in)
    }
}

/// Transposed convolution: the adjoint of [`Conv2d`] in its input.
///
/// `weight` is laid out `[in, out, kh, kw]`, i.e. exactly the kernel of the
/// convolution mapping `out` channels to `in` channels that this layer transposes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T = f64> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Clone, Debug)]
pub struct ConvTransposeCache<T> {
    input: Tensor<T>,
    out_hw: (usize, usize),
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        ConvTranspose2d {
            weight: he_normal([in_channels, out_channels, kernel, kernel], in_channels * kernel * kernel, rng),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding) -> Result<Self> {
        check_kernel(&weight, bias.len(), weight.shape().get(1).copied().unwrap_or(0), stride)?;
        Ok(ConvTranspose2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ConvTranspose2d {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Output size when none is requested explicitly.
    pub fn default_output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = (self.weight.shape()[2], self.weight.shape()[3]);
        match self.padding {
            Padding::Valid => ((h - 1) * self.stride + kh, (w - 1) * self.stride + kw),
            Padding::Same => (h * self.stride, w * self.stride),
        }
    }

    fn geometry(&self, x: &Tensor<T>, out_hw: (usize, usize)) -> Result<(usize, Geometry)> {
        let (b, c, h, w) = x.dims4("transpose_conv2d")?;
        if c != self.in_channels() {
            return Err(Error::shape("transpose_conv2d", self.in_channels(), c));
        }
        let (kh, kw) = (self.weight.shape()[2], self.weight.shape()[3]);
        let g = Geometry::new(self.out_channels(), out_hw.0, out_hw.1, kh, kw, self.stride, self.padding)?;
        if (g.out_h, g.out_w) != (h, w) {
            return Err(Error::shape(
                "transpose_conv2d",
                format!("input {}x{} for output {}x{}", g.out_h, g.out_w, out_hw.0, out_hw.1),
                format!("{h}x{w}"),
            ));
        }
        Ok((b, g))
    }

    pub fn forward(&self, x: &Tensor<T>, out_hw: Option<(usize, usize)>) -> Result<(Tensor<T>, ConvTransposeCache<T>)> {
        let (_, _, h, w) = x.dims4("transpose_conv2d")?;
        let out_hw = out_hw.unwrap_or_else(|| self.default_output_hw(h, w));
        let (b, g) = self.geometry(x, out_hw)?;
        let cin = self.in_channels();
        let (rows, p) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros(&[b, self.out_channels(), out_hw.0, out_hw.1]);
        let mut cols = vec![T::zero(); rows * p];
        for i in 0..b {
            T::gemm(rows, cin, p, T::one(), self.weight.data(), (1, rows as isize), x.item_slice(i), (p as isize, 1), T::zero(), &mut cols, p as isize);
            let yi = out.item_slice_mut(i);
            g.col2im(&cols, yi);
            let plane = out_hw.0 * out_hw.1;
            for (oc, chunk) in yi.chunks_mut(plane).enumerate() {
                let bv = self.bias.data()[oc];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
        Ok((out, ConvTransposeCache { input: x.clone(), out_hw }))
    }

    pub fn backward(&self, cache: &ConvTransposeCache<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let x = &cache.input;
        let (b, g) = self.geometry(x, cache.out_hw)?;
        let expected = [b, self.out_channels(), cache.out_hw.0, cache.out_hw.1];
        if grad_out.shape() != expected {
            return Err(Error::shape("transpose_conv2d_backward", shape_str(&expected), shape_str(grad_out.shape())));
        }
        let cin = self.in_channels();
        let (rows, p) = (g.col_rows(), g.col_cols());
        let plane = cache.out_hw.0 * cache.out_hw.1;
        let mut grad_in = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); rows * p];
        for i in 0..b {
            let gi = grad_out.item_slice(i);
            for (oc, chunk) in gi.chunks(plane).enumerate() {
                grads.bias.data_mut()[oc] += chunk.iter().copied().sum();
            }
            g.im2col(gi, &mut cols);
            T::gemm(cin, rows, p, T::one(), self.weight.data(), (rows as isize, 1), &cols, (p as isize, 1), T::zero(), grad_in.item_slice_mut(i), p as isize);
            T::gemm(cin, p, rows, T::one(), x.item_slice(i), (p as isize, 1), &cols, (1, p as isize), T::one(), grads.weight.data_mut(), rows as isize);
        }
        Ok(grad_in)
    }
}
