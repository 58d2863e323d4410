//! Measurement operators and the data-consistency step.

mod box_downsample;
mod complex;
pub mod fft;
pub mod mask;
mod masked_fourier;

pub use box_downsample::{approx_deconvolve, BoxDownsample, BOX_FACTOR};
pub use complex::{batch_magnitude, ComplexImage};
pub use mask::{generate_mask, MaskSpec, SamplingMask};
pub use masked_fourier::MaskedFourier;

use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// A linear map Φ acting on batched images `[B, ...image_shape]`.
pub trait LinearOperator<T: Real>: Send + Sync {
    fn image_shape(&self) -> Vec<usize>;
    fn measurement_shape(&self) -> Vec<usize>;
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn adjoint(&self, y: &Tensor<T>) -> Result<Tensor<T>>;

    /// `Phi^H Phi x`.
    fn normal(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.adjoint(&self.forward(x)?)
    }

    fn name(&self) -> &'static str;
}

/// `x - alpha Phi^H Phi x`.
pub fn nullspace_filter<T: Real>(op: &dyn LinearOperator<T>, x: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    let mut out = x.clone();
    out.axpy(-alpha, &op.normal(x)?)?;
    Ok(out)
}

/// `x + alpha Phi^H (y - Phi x)`.
pub fn data_consistency<T: Real>(op: &dyn LinearOperator<T>, x: &Tensor<T>, y: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    let residual = y.sub(&op.forward(x)?)?;
    let mut out = x.clone();
    out.axpy(alpha, &op.adjoint(&residual)?)?;
    Ok(out)
}
