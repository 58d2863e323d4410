use super::LinearOperator;
use crate::error::{Error, Result};
use crate::tensor::{shape_str, Real, Tensor};

pub const BOX_FACTOR: usize = 4;

/// Per-channel average over non-overlapping `4 x 4` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDownsample {
    channels: usize,
    h: usize,
    w: usize,
}

impl BoxDownsample {
    pub fn new(channels: usize, h: usize, w: usize) -> Result<Self> {
        if channels == 0 || h == 0 || w == 0 || h % BOX_FACTOR != 0 || w % BOX_FACTOR != 0 {
            return Err(Error::InvalidArgument(format!(
                "box downsampling needs positive sizes divisible by {BOX_FACTOR}, got {channels}x{h}x{w}"
            )));
        }
        Ok(BoxDownsample { channels, h, w })
    }

    pub fn low_res_dims(&self) -> (usize, usize) {
        (self.h / BOX_FACTOR, self.w / BOX_FACTOR)
    }

    fn check(&self, t: &Tensor<impl Real>, op: &'static str, hw: (usize, usize)) -> Result<usize> {
        let (b, c, h, w) = t.dims4(op)?;
        if c != self.channels || (h, w) != hw {
            return Err(Error::shape(op, format!("[B, {}, {}, {}]", self.channels, hw.0, hw.1), shape_str(t.shape())));
        }
        Ok(b)
    }
}

impl<T: Real> LinearOperator<T> for BoxDownsample {
    fn image_shape(&self) -> Vec<usize> {
        vec![self.channels, self.h, self.w]
    }

    fn measurement_shape(&self) -> Vec<usize> {
        let (lh, lw) = self.low_res_dims();
        vec![self.channels, lh, lw]
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check(x, "BoxDownsample::forward", (self.h, self.w))?;
        let (lh, lw) = self.low_res_dims();
        let norm = T::of((BOX_FACTOR * BOX_FACTOR) as f64).recip();
        let mut out = vec![T::zero(); b * self.channels * lh * lw];
        // Pairwise summation keeps constant blocks exact.
        let pair = |a: T, b: T, c: T, d: T| (a + b) + (c + d);
        for (plane, o) in x.data().chunks(self.h * self.w).zip(out.chunks_mut(lh * lw)) {
            for bi in 0..lh {
                for bj in 0..lw {
                    let row = |r: usize| {
                        let s = &plane[(bi * BOX_FACTOR + r) * self.w + bj * BOX_FACTOR..][..BOX_FACTOR];
                        pair(s[0], s[1], s[2], s[3])
                    };
                    o[bi * lw + bj] = pair(row(0), row(1), row(2), row(3)) * norm;
                }
            }
        }
        Tensor::from_vec(&[b, self.channels, lh, lw], out)
    }

    fn adjoint(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check(y, "BoxDownsample::adjoint", self.low_res_dims())?;
        let (lh, lw) = self.low_res_dims();
        let norm = T::of((BOX_FACTOR * BOX_FACTOR) as f64).recip();
        let mut out = vec![T::zero(); b * self.channels * self.h * self.w];
        for (plane, o) in y.data().chunks(lh * lw).zip(out.chunks_mut(self.h * self.w)) {
            for i in 0..self.h {
                for j in 0..self.w {
                    o[i * self.w + j] = plane[(i / BOX_FACTOR) * lw + j / BOX_FACTOR] * norm;
                }
            }
        }
        Tensor::from_vec(&[b, self.channels, self.h, self.w], out)
    }

    fn name(&self) -> &'static str {
        "box-downsample"
    }
}

/// Gradient descent on `0.5 ||y - Phi x||^2` from the block-replicated start `16 Phi^H y`.
pub fn approx_deconvolve<T: Real>(op: &BoxDownsample, y: &Tensor<T>, steps: usize, step_size: f64) -> Result<Tensor<T>> {
    let mut x = LinearOperator::<T>::adjoint(op, y)?.scale(T::of((BOX_FACTOR * BOX_FACTOR) as f64));
    for _ in 0..steps {
        x = super::data_consistency(op, &x, y, T::of(step_size))?;
    }
    Ok(x)
}
