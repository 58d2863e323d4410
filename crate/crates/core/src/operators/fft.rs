use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::tensor::Real;

/// Unitary 2D FFT on row-major `h x w` complex buffers (scaled by `1/sqrt(h*w)` both ways).
#[derive(Clone)]
pub struct Fft2<T: Real> {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.h, self.w)
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
            scale: T::one() / T::of((h * w) as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    fn run(&self, buf: &mut [Complex<T>], rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        assert_eq!(buf.len(), self.h * self.w, "fft buffer size");
        rows.process(buf);
        let mut column = vec![Complex::new(T::zero(), T::zero()); self.h];
        for j in 0..self.w {
            for i in 0..self.h {
                column[i] = buf[i * self.w + j];
            }
            cols.process(&mut column);
            for i in 0..self.h {
                buf[i * self.w + j] = column[i] * self.scale;
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_has_flat_spectrum() {
        let fft = Fft2::<f64>::new(4, 8);
        let mut buf = vec![Complex::new(0.0, 0.0); 32];
        buf[0] = Complex::new(1.0, 0.0);
        fft.forward(&mut buf);
        for v in &buf {
            assert!((v.re - 1.0 / 32f64.sqrt()).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        fft.inverse(&mut buf);
        assert!((buf[0].re - 1.0).abs() < 1e-14);
        assert!(buf[1..].iter().all(|v| v.norm() < 1e-14));
    }
}
