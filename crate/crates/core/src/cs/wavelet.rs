//! Orthonormal multilevel Haar transform with the usual nested (Mallat) layout.

use crate::error::{Error, Result};
use crate::tensor::{shape_str, Real, Tensor};

pub fn max_levels(h: usize, w: usize) -> usize {
    let mut levels = 0;
    while h % (2 << levels) == 0 && w % (2 << levels) == 0 {
        levels += 1;
    }
    levels
}

fn check<T: Real>(x: &Tensor<T>, levels: usize) -> Result<(usize, usize)> {
    if x.ndim() < 2 {
        return Err(Error::shape("wavelet", "[..., H, W]", shape_str(x.shape())));
    }
    let (h, w) = (x.shape()[x.ndim() - 2], x.shape()[x.ndim() - 1]);
    if levels > max_levels(h, w) {
        return Err(Error::InvalidArgument(format!("{h}x{w} is not divisible by 2^{levels}")));
    }
    Ok((h, w))
}

fn haar_step<T: Real>(line: &mut [T], scratch: &mut [T], inverse: bool) {
    let half = line.len() / 2;
    let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
    if inverse {
        for k in 0..half {
            scratch[2 * k] = (line[k] + line[half + k]) * s;
            scratch[2 * k + 1] = (line[k] - line[half + k]) * s;
        }
    } else {
        for k in 0..half {
            scratch[k] = (line[2 * k] + line[2 * k + 1]) * s;
            scratch[half + k] = (line[2 * k] - line[2 * k + 1]) * s;
        }
    }
    line.copy_from_slice(&scratch[..line.len()]);
}

fn transform_plane<T: Real>(plane: &mut [T], h: usize, w: usize, levels: usize, inverse: bool) {
    let mut scratch = vec![T::zero(); h.max(w)];
    let mut col = vec![T::zero(); h];
    let order: Vec<usize> = if inverse { (0..levels).rev().collect() } else { (0..levels).collect() };
    for l in order {
        let (lh, lw) = (h >> l, w >> l);
        let rows = |plane: &mut [T], scratch: &mut [T]| {
            for i in 0..lh {
                haar_step(&mut plane[i * w..i * w + lw], scratch, inverse);
            }
        };
        let cols = |plane: &mut [T], scratch: &mut [T], col: &mut [T]| {
            for j in 0..lw {
                for i in 0..lh {
                    col[i] = plane[i * w + j];
                }
                haar_step(&mut col[..lh], scratch, inverse);
                for i in 0..lh {
                    plane[i * w + j] = col[i];
                }
            }
        };
        if inverse {
            cols(plane, &mut scratch, &mut col);
            rows(plane, &mut scratch);
        } else {
            rows(plane, &mut scratch);
            cols(plane, &mut scratch, &mut col);
        }
    }
}

fn apply<T: Real>(x: &Tensor<T>, levels: usize, inverse: bool) -> Result<Tensor<T>> {
    let (h, w) = check(x, levels)?;
    let mut out = x.clone();
    for plane in out.data_mut().chunks_mut(h * w) {
        transform_plane(plane, h, w, levels, inverse);
    }
    Ok(out)
}

/// Transforms every trailing `H x W` plane.
pub fn wavelet_forward<T: Real>(x: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    apply(x, levels, false)
}

pub fn wavelet_inverse<T: Real>(c: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    apply(c, levels, true)
}
