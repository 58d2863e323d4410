use rustfft::num_complex::Complex;

use super::fft::Fft2;
use super::mask::SamplingMask;
use super::LinearOperator;
use crate::error::{Error, Result};
use crate::tensor::{shape_str, Real, Tensor};

/// Unitary 2D Fourier transform restricted to the sampled set Ω.
///
/// Images are `[B, 2, H, W]` (real, imaginary); measurements are `[B, 2, M]`
/// with the sampled entries in row-major centered-mask order.
#[derive(Clone, Debug)]
pub struct MaskedFourier<T: Real = f64> {
    mask: SamplingMask,
    fft: Fft2<T>,
    bins: Vec<usize>,
}

impl<T: Real> MaskedFourier<T> {
    pub fn new(mask: SamplingMask) -> Self {
        let (h, w) = mask.dims();
        let bins = mask
            .sampled_indices()
            .into_iter()
            .map(|idx| {
                let (i, j) = (idx / w, idx % w);
                ((i + h - h / 2) % h) * w + (j + w - w / 2) % w
            })
            .collect();
        MaskedFourier { fft: Fft2::new(h, w), mask, bins }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn num_samples(&self) -> usize {
        self.bins.len()
    }

    /// Unshifted FFT bin for each measurement entry.
    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    fn check_image(&self, x: &Tensor<T>, op: &'static str) -> Result<usize> {
        let (b, c, h, w) = x.dims4(op)?;
        if c != 2 || (h, w) != self.mask.dims() {
            let (mh, mw) = self.mask.dims();
            return Err(Error::shape(op, format!("[B, 2, {mh}, {mw}]"), shape_str(x.shape())));
        }
        Ok(b)
    }
}

impl<T: Real> LinearOperator<T> for MaskedFourier<T> {
    fn image_shape(&self) -> Vec<usize> {
        let (h, w) = self.mask.dims();
        vec![2, h, w]
    }

    fn measurement_shape(&self) -> Vec<usize> {
        vec![2, self.bins.len()]
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_image(x, "MaskedFourier::forward")?;
        let (h, w) = self.mask.dims();
        let m = self.bins.len();
        let mut out = vec![T::zero(); b * 2 * m];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for i in 0..b {
            let item = x.item_slice(i);
            for (p, v) in buf.iter_mut().enumerate() {
                *v = Complex::new(item[p], item[h * w + p]);
            }
            self.fft.forward(&mut buf);
            let o = &mut out[i * 2 * m..(i + 1) * 2 * m];
            for (s, &bin) in self.bins.iter().enumerate() {
                o[s] = buf[bin].re;
                o[m + s] = buf[bin].im;
            }
        }
        Tensor::from_vec(&[b, 2, m], out)
    }

    fn adjoint(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let m = self.bins.len();
        if y.ndim() != 3 || y.shape()[1] != 2 || y.shape()[2] != m {
            return Err(Error::shape("MaskedFourier::adjoint", format!("[B, 2, {m}]"), shape_str(y.shape())));
        }
        let b = y.shape()[0];
        let (h, w) = self.mask.dims();
        let mut out = vec![T::zero(); b * 2 * h * w];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for i in 0..b {
            let yi = y.item_slice(i);
            buf.fill(Complex::new(T::zero(), T::zero()));
            for (s, &bin) in self.bins.iter().enumerate() {
                buf[bin] = Complex::new(yi[s], yi[m + s]);
            }
            self.fft.inverse(&mut buf);
            let o = &mut out[i * 2 * h * w..(i + 1) * 2 * h * w];
            for (p, v) in buf.iter().enumerate() {
                o[p] = v.re;
                o[h * w + p] = v.im;
            }
        }
        Tensor::from_vec(&[b, 2, h, w], out)
    }

    fn normal(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_image(x, "MaskedFourier::normal")?;
        let (h, w) = self.mask.dims();
        let mut keep = vec![false; h * w];
        for &bin in &self.bins {
            keep[bin] = true;
        }
        let mut out = x.clone();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for i in 0..b {
            let item = out.item_slice_mut(i);
            for (p, v) in buf.iter_mut().enumerate() {
                *v = Complex::new(item[p], item[h * w + p]);
            }
            self.fft.forward(&mut buf);
            for (v, &k) in buf.iter_mut().zip(&keep) {
                if !k {
                    *v = Complex::new(T::zero(), T::zero());
                }
            }
            self.fft.inverse(&mut buf);
            for (p, v) in buf.iter().enumerate() {
                item[p] = v.re;
                item[h * w + p] = v.im;
            }
        }
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "masked-fourier"
    }
}
