use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `gamma ||x||_1 + (1 - gamma) ||x||_2` with the unsquared l2 norm.
pub fn mixed_norm<T: Real>(x: &Tensor<T>, gamma: f64) -> f64 {
    gamma * x.norm_l1().as_f64() + (1.0 - gamma) * x.norm_l2().as_f64()
}

/// Gradient of [`mixed_norm`]; the non-differentiable points use the zero subgradient.
pub fn mixed_norm_grad<T: Real>(x: &Tensor<T>, gamma: f64) -> Tensor<T> {
    let norm = x.norm_l2();
    let (g, r) = (T::of(gamma), T::of(1.0 - gamma));
    x.map(|v| {
        let l1 = if v > T::zero() { g } else if v < T::zero() { -g } else { T::zero() };
        let l2 = if norm > T::zero() { r * v / norm } else { T::zero() };
        l1 + l2
    })
}

/// Mean over the batch of `(1 - d_real)^2 + d_fake^2`.
pub fn discriminator_loss<T: Real>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<f64> {
    d_real.same_shape(d_fake, "discriminator_loss")?;
    if d_real.is_empty() {
        return Err(Error::InvalidArgument("discriminator loss on an empty batch".into()));
    }
    let total: f64 = d_real
        .data()
        .iter()
        .zip(d_fake.data())
        .map(|(&r, &f)| (1.0 - r.as_f64()).powi(2) + f.as_f64().powi(2))
        .sum();
    Ok(total / d_real.len() as f64)
}

/// Gradients of [`discriminator_loss`] with respect to `d_real` and `d_fake`.
pub fn discriminator_loss_grad<T: Real>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let n = T::of(d_real.len() as f64);
    let two = T::of(2.0);
    (d_real.map(|r| -two * (T::one() - r) / n), d_fake.map(|f| two * f / n))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorLossTerms {
    /// Batch mean of `sum_k ||y - Phi x_check_k||^2`.
    pub fidelity: f64,
    /// Batch mean of `(1 - D(x_hat))^2`, before weighting.
    pub gan: f64,
    /// Batch mean of `||x - x_hat||_{1,2}`, before weighting.
    pub pixel: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl GeneratorLossTerms {
    pub fn total(&self) -> f64 {
        self.fidelity + self.lambda * self.gan + self.eta * self.pixel
    }
}

/// Per-item pixel term and its gradient with respect to `x_hat`.
pub fn pixel_loss<T: Real>(truth: &Tensor<T>, x_hat: &Tensor<T>, gamma: f64) -> Result<(f64, Tensor<T>)> {
    truth.same_shape(x_hat, "pixel_loss")?;
    let b = truth.shape()[0];
    let mut grad = Tensor::zeros(truth.shape());
    let mut total = 0.0;
    for i in 0..b {
        let err = Tensor::from_vec(&[truth.item_slice(i).len()], truth.item_slice(i).iter().zip(x_hat.item_slice(i)).map(|(&a, &b)| a - b).collect())?;
        total += mixed_norm(&err, gamma);
        let g = mixed_norm_grad(&err, gamma);
        let inv_b = T::of(b as f64).recip();
        for (d, &v) in grad.item_slice_mut(i).iter_mut().zip(g.data()) {
            *d = -v * inv_b;
        }
    }
    Ok((total / b as f64, grad))
}

/// `(1/B) sum_i sum_k ||y_i - Phi x_check_{k,i}||^2` given the residual norms per copy.
pub fn fidelity_loss<T: Real>(residuals: &[Tensor<T>]) -> f64 {
    let b = residuals.first().map(|r| r.shape()[0]).unwrap_or(1).max(1);
    residuals.iter().map(|r| r.norm_sqr().as_f64()).sum::<f64>() / b as f64
}

/// Batch mean of `(1 - d)^2` and its gradient.
pub fn gan_generator_loss<T: Real>(d_fake: &Tensor<T>) -> (f64, Tensor<T>) {
    let n = d_fake.len().max(1) as f64;
    let value = d_fake.data().iter().map(|&d| (1.0 - d.as_f64()).powi(2)).sum::<f64>() / n;
    let grad = d_fake.map(|d| -T::of(2.0) * (T::one() - d) / T::of(n));
    (value, grad)
}

/// Assembles the generator cost from its parts: `y` and `Phi x_check_k` measurements,
/// the truth, the estimate and the discriminator decisions on the estimate.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<T: Real>(
    y: &Tensor<T>,
    predicted_measurements: &[Tensor<T>],
    x_hat: &Tensor<T>,
    truth: &Tensor<T>,
    d_of_xhat: Option<&Tensor<T>>,
    lambda: f64,
    eta: f64,
    gamma: f64,
) -> Result<GeneratorLossTerms> {
    let residuals = predicted_measurements.iter().map(|m| y.sub(m)).collect::<Result<Vec<_>>>()?;
    let fidelity = fidelity_loss(&residuals);
    let (pixel, _) = pixel_loss(truth, x_hat, gamma)?;
    let gan = d_of_xhat.map(|d| gan_generator_loss(d).0).unwrap_or(0.0);
    Ok(GeneratorLossTerms { fidelity, gan, pixel, lambda, eta })
}

/// `lambda min(1, t / warmup_batches)`.
pub fn gan_warmup(batch_index: usize, lambda: f64, warmup_batches: usize) -> f64 {
    if warmup_batches == 0 {
        return lambda;
    }
    lambda * (batch_index as f64 / warmup_batches as f64).min(1.0)
}

/// Global-norm clipping; returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [&mut Tensor<T>], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = grads.iter().map(|g| g.norm_sqr().as_f64()).sum::<f64>().sqrt();
    if norm > threshold {
        let s = T::of(threshold / norm);
        for g in grads.iter_mut() {
            g.map_inplace(|v| v * s);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn mixed_norm_cases() {
        let x = t(&[3.0, 4.0]);
        assert_eq!(mixed_norm(&x, 1.0), 7.0);
        assert_eq!(mixed_norm(&x, 0.0), 5.0);
        assert_eq!(mixed_norm(&x, 0.5), 6.0);
    }

    #[test]
    fn discriminator_loss_cases() {
        assert_eq!(discriminator_loss(&t(&[1.0]), &t(&[0.0])).unwrap(), 0.0);
        assert_eq!(discriminator_loss(&t(&[0.0]), &t(&[1.0])).unwrap(), 2.0);
        assert_eq!(discriminator_loss(&t(&[0.5]), &t(&[0.5])).unwrap(), 0.5);
        assert_eq!(discriminator_loss(&t(&[1.0, 0.0]), &t(&[0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn warmup_ramp() {
        assert_eq!(gan_warmup(0, 0.1, 1000), 0.0);
        assert_eq!(gan_warmup(1000, 0.1, 1000), 0.1);
        assert_eq!(gan_warmup(500, 0.1, 1000), 0.05);
        assert_eq!(gan_warmup(5000, 0.1, 1000), 0.1);
        let ramp: Vec<f64> = (0..2000).map(|b| gan_warmup(b, 0.3, 700)).collect();
        assert!(ramp.windows(2).all(|w| w[1] >= w[0] && w[1] <= 0.3));
    }

    #[test]
    fn clipping_cases() {
        let mut a = t(&[3.0, 4.0]);
        let norm = clip_gradients(&mut [&mut a], 1.0).unwrap();
        assert_eq!(norm, 5.0);
        assert!((a.data()[0] - 0.6).abs() < 1e-15 && (a.data()[1] - 0.8).abs() < 1e-15);
        let mut b = t(&[0.3, 0.4]);
        clip_gradients(&mut [&mut b], 1.0).unwrap();
        assert_eq!(b.data(), &[0.3, 0.4]);
        assert!(clip_gradients(&mut [&mut b], 0.0).is_err());
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let y = t(&[1.0, 2.0]).reshape(&[1, 2]).unwrap();
        let x = t(&[0.5, 0.25, 1.0]).reshape(&[1, 3]).unwrap();
        let terms = generator_loss(&y, &[y.clone(), y.clone()], &x, &x, Some(&t(&[1.0])), 0.1, 0.9, 0.5).unwrap();
        assert_eq!(terms.total(), 0.0);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_bounded(v in proptest::collection::vec(-10.0f64..10.0, 1..20), thr in 0.01f64..5.0) {
            let mut g = t(&v);
            clip_gradients(&mut [&mut g], thr).unwrap();
            prop_assert!(g.norm_l2() <= thr * (1.0 + 1e-12));
        }

        #[test]
        fn generator_loss_is_non_negative(v in proptest::collection::vec(-1.0f64..1.0, 8), d in -2.0f64..2.0, gamma in 0.0f64..1.0) {
            let y = Tensor::from_vec(&[2, 2], v[..4].to_vec()).unwrap();
            let m = Tensor::from_vec(&[2, 2], v[4..].to_vec()).unwrap();
            let x = Tensor::from_vec(&[2, 2], v[..4].to_vec()).unwrap();
            let xh = Tensor::from_vec(&[2, 2], v[4..].to_vec()).unwrap();
            let terms = generator_loss(&y, &[m], &xh, &x, Some(&t(&[d, d])), 0.1, 1.0, gamma).unwrap();
            prop_assert!(terms.total() >= 0.0);
        }
    }
}
