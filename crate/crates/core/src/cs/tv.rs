//! Anisotropic total variation with forward differences and periodic boundary.

use crate::tensor::{Real, Tensor};

pub const DEFAULT_TV_STEP: f64 = 0.25;
pub const DEFAULT_TV_ITERS: usize = 50;

/// `sum |x[i, j+1] - x[i, j]| + |x[i+1, j] - x[i, j]|` over every trailing `H x W` plane.
pub fn tv_norm<T: Real>(x: &Tensor<T>) -> T {
    let (h, w) = plane_dims(x);
    let mut total = T::zero();
    for p in x.data().chunks(h * w) {
        for i in 0..h {
            for j in 0..w {
                let v = p[i * w + j];
                total += (p[i * w + (j + 1) % w] - v).abs() + (p[((i + 1) % h) * w + j] - v).abs();
            }
        }
    }
    total
}

fn plane_dims<T: Real>(x: &Tensor<T>) -> (usize, usize) {
    let n = x.ndim();
    assert!(n >= 2, "tv expects [..., H, W]");
    (x.shape()[n - 2], x.shape()[n - 1])
}

/// Approximate `argmin_x 0.5 ||x - z||^2 + weight TV(x)` by projected gradient on the dual.
pub fn tv_prox<T: Real>(z: &Tensor<T>, weight: T, inner_iters: usize) -> Tensor<T> {
    tv_prox_with_step(z, weight, inner_iters, T::of(DEFAULT_TV_STEP))
}

pub fn tv_prox_with_step<T: Real>(z: &Tensor<T>, weight: T, inner_iters: usize, step: T) -> Tensor<T> {
    if weight <= T::zero() || inner_iters == 0 {
        return z.clone();
    }
    let (h, w) = plane_dims(z);
    let mut out = z.clone();
    let n = h * w;
    let mut qh = vec![T::zero(); n];
    let mut qv = vec![T::zero(); n];
    for (zp, xp) in z.data().chunks(n).zip(out.data_mut().chunks_mut(n)) {
        qh.fill(T::zero());
        qv.fill(T::zero());
        xp.copy_from_slice(zp);
        for _ in 0..inner_iters {
            for i in 0..h {
                for j in 0..w {
                    let k = i * w + j;
                    let v = xp[k];
                    qh[k] = (qh[k] + step * (xp[i * w + (j + 1) % w] - v)).max(-weight).min(weight);
                    qv[k] = (qv[k] + step * (xp[((i + 1) % h) * w + j] - v)).max(-weight).min(weight);
                }
            }
            // x = z - D^T q
            for i in 0..h {
                for j in 0..w {
                    let k = i * w + j;
                    let left = i * w + (j + w - 1) % w;
                    let up = ((i + h - 1) % h) * w + j;
                    xp[k] = zp[k] + (qh[k] - qh[left]) + (qv[k] - qv[up]);
                }
            }
        }
    }
    out
}
