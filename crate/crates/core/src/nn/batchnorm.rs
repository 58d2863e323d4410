use crate::error::{Error, Result};
use crate::tensor::{shape_str, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Eval,
}

/// Per-channel batch normalization over `[B, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T = f64> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    /// Weight kept on the old running statistic at each update.
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    mode: Mode,
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
    count: usize,
}

impl<T: Real> BatchNorm2d<T> {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            scale: Tensor::full(&[channels], T::one()),
            shift: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            epsilon: Self::DEFAULT_EPSILON,
            momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn zeros_like(&self) -> Self {
        BatchNorm2d {
            scale: Tensor::zeros(self.scale.shape()),
            shift: Tensor::zeros(self.shift.shape()),
            running_mean: Tensor::zeros(self.running_mean.shape()),
            running_var: Tensor::zeros(self.running_var.shape()),
            epsilon: self.epsilon,
            momentum: self.momentum,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BnCache<T>)> {
        let (b, c, h, w) = x.dims4("batchnorm")?;
        if c != self.channels() {
            return Err(Error::shape("batchnorm", self.channels(), format!("{c} channels in {}", shape_str(x.shape()))));
        }
        if b == 0 {
            return Err(Error::InvalidArgument("batchnorm on an empty batch".into()));
        }
        let plane = h * w;
        let count = b * plane;
        let eps = T::of(self.epsilon);
        let n = T::of(count as f64);
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for bi in 0..b {
                        s += x.item_slice(bi)[ch * plane..(ch + 1) * plane].iter().copied().sum::<T>();
                    }
                    let m = s / n;
                    let mut q = T::zero();
                    for bi in 0..b {
                        q += x.item_slice(bi)[ch * plane..(ch + 1) * plane]
                            .iter()
                            .map(|&v| (v - m) * (v - m))
                            .sum::<T>();
                    }
                    mean[ch] = m;
                    var[ch] = q / n;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for bi in 0..b {
            let xi = x.item_slice(bi);
            let xh = xhat.item_slice_mut(bi);
            let yi = y.item_slice_mut(bi);
            for ch in 0..c {
                let (g, s) = (self.scale.data()[ch], self.shift.data()[ch]);
                let r = ch * plane..(ch + 1) * plane;
                for ((d, o), &v) in xh[r.clone()].iter_mut().zip(&mut yi[r.clone()]).zip(&xi[r]) {
                    *d = (v - mean[ch]) * inv_std[ch];
                    *o = g * *d + s;
                }
            }
        }
        let cache = BnCache {
            mode,
            xhat,
            inv_std,
            batch_mean: if mode == Mode::Train { mean } else { Vec::new() },
            batch_var: if mode == Mode::Train { var } else { Vec::new() },
            count,
        };
        Ok((y, cache))
    }

    /// Folds the batch statistics of a train-mode forward pass into the running estimates.
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = T::of(self.momentum);
        let unbias = if cache.count > 1 {
            T::of(cache.count as f64 / (cache.count as f64 - 1.0))
        } else {
            T::one()
        };
        for ch in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = m * *rm + (T::one() - m) * cache.batch_mean[ch];
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = m * *rv + (T::one() - m) * cache.batch_var[ch] * unbias;
        }
    }

    pub fn backward(&self, cache: &BnCache<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        cache.xhat.same_shape(grad_out, "batchnorm_backward")?;
        let (b, c, h, w) = grad_out.dims4("batchnorm_backward")?;
        let plane = h * w;
        let n = T::of(cache.count as f64);
        let mut gx = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let gamma = self.scale.data()[ch];
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for bi in 0..b {
                let r = ch * plane..(ch + 1) * plane;
                for (&g, &xh) in grad_out.item_slice(bi)[r.clone()].iter().zip(&cache.xhat.item_slice(bi)[r]) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            grads.scale.data_mut()[ch] += sum_gx;
            grads.shift.data_mut()[ch] += sum_g;
            let k = gamma * cache.inv_std[ch];
            for bi in 0..b {
                let r = ch * plane..(ch + 1) * plane;
                let xh = &cache.xhat.item_slice(bi)[r.clone()];
                let go = &grad_out.item_slice(bi)[r.clone()];
                let dst = &mut gx.item_slice_mut(bi)[r];
                match cache.mode {
                    Mode::Train => {
                        for ((d, &g), &xv) in dst.iter_mut().zip(go).zip(xh) {
                            *d = k * (g - sum_g / n - xv * sum_gx / n);
                        }
                    }
                    Mode::Eval => {
                        for (d, &g) in dst.iter_mut().zip(go) {
                            *d = k * g;
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_standardizes_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bn = BatchNorm2d::<f64>::new(3);
        let x = Tensor::randn(&[4, 3, 5, 5], 3.0, &mut rng).map(|v| v + 2.0);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|b| y.item_slice(b)[ch * 25..(ch + 1) * 25].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-5);
            assert!((v - 1.0).abs() < 1e-4, "var {v}");
        }
    }

    #[test]
    fn constant_channel_maps_to_shift() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        bn.shift.data_mut()[0] = 0.7;
        bn.scale.data_mut()[0] = 3.0;
        let x = Tensor::full(&[2, 1, 3, 3], 4.2);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn running_stats_only_move_in_train_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = Tensor::randn(&[3, 2, 4, 4], 1.0, &mut rng).map(|v| v + 5.0);
        let (_, cache) = bn.forward(&x, Mode::Eval).unwrap();
        bn.update_running(&cache);
        assert_eq!(bn.running_mean.data(), &[0.0, 0.0]);
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        bn.update_running(&cache);
        assert!(bn.running_mean.data().iter().all(|&m| m > 0.4 && m < 0.6));
        assert!(bn.running_var.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let bn = BatchNorm2d::<f64>::new(2);
        assert!(bn.forward(&Tensor::zeros(&[0, 2, 3, 3]), Mode::Train).is_err());
        assert!(bn.forward(&Tensor::zeros(&[1, 3, 3, 3]), Mode::Train).is_err());
    }
}
