use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T = f64> {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub step_count: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        AdamState {
            config,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step_count: 0,
        }
    }

    /// Applies one update. A non-finite gradient rejects the whole step and leaves
    /// parameters and state untouched.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::shape("adam_step", self.first_moment.len(), format!("{} params, {} grads", params.len(), grads.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            p.same_shape(g, "adam_step")?;
            p.same_shape(m, "adam_step")?;
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let corr1 = T::of(1.0 - c.beta1.powi(t));
        let corr2 = T::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.epsilon));
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first_moment).zip(&mut self.second_moment) {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / corr1;
                let vhat = *vv / corr2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::from_vec(&[2], vec![1.0, -2.0]).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        let g = Tensor::zeros(&[2]);
        adam.step(vec![&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g0 in [3.7, -0.02, 1e3] {
            let mut p = Tensor::<f64>::scalar(0.5);
            let mut adam = AdamState::new(AdamConfig { learning_rate: 1e-3, ..Default::default() }, &[&p]);
            adam.step(vec![&mut p], &[&Tensor::scalar(g0)]).unwrap();
            let moved = 0.5 - p.data()[0];
            assert!((moved - 1e-3 * g0.signum()).abs() < 1e-8, "{g0}: {moved}");
        }
    }

    #[test]
    fn two_steps_follow_hand_recursion() {
        let cfg = AdamConfig { learning_rate: 0.1, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
        let mut p = Tensor::<f64>::scalar(1.0);
        let mut adam = AdamState::new(cfg, &[&p]);
        let g = 2.0;
        adam.step(vec![&mut p], &[&Tensor::scalar(g)]).unwrap();
        adam.step(vec![&mut p], &[&Tensor::scalar(g)]).unwrap();
        // hand recursion
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.data()[0] - x).abs() < 1e-15);
        assert_eq!(adam.step_count, 2);
        assert!(adam.second_moment[0].data()[0] >= 0.0);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Tensor::<f64>::scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        assert!(adam.step(vec![&mut p], &[&Tensor::scalar(f64::NAN)]).is_err());
        assert_eq!(adam.step_count, 0);
        assert_eq!(p.data()[0], 1.0);
    }
}
