use crate::error::{Error, Result};
use crate::operators::batch_magnitude;
use crate::tensor::{shape_str, Tensor};

pub const SNR_CAP_DB: f64 = 300.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `20 log10(||truth|| / ||truth - estimate||)`, capped at [`SNR_CAP_DB`].
pub fn snr(truth: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<f64> {
    truth.same_shape(estimate, "snr")?;
    let signal = truth.norm_l2();
    if signal == 0.0 {
        return Err(Error::InvalidArgument("snr of an all-zero reference is undefined".into()));
    }
    let err = truth.sub(estimate)?.norm_l2();
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((20.0 * (signal / err).log10()).min(SNR_CAP_DB))
}

/// As [`snr`], on magnitudes when the images are two-channel complex `[B, 2, H, W]`.
pub fn image_snr(truth: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<f64> {
    if truth.ndim() == 4 && truth.shape()[1] == 2 {
        snr(&batch_magnitude(truth)?, &batch_magnitude(estimate)?)
    } else {
        snr(truth, estimate)
    }
}

pub fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-mode separable filtering of an `h x w` plane.
fn blur(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..k).map(|t| g[t] * plane[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| g[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows of two `[H, W]` images.
pub fn ssim(truth: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<f64> {
    truth.same_shape(estimate, "ssim")?;
    if truth.ndim() != 2 {
        return Err(Error::shape("ssim", "[H, W]", shape_str(truth.shape())));
    }
    let (h, w) = (truth.shape()[0], truth.shape()[1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window();
    let (a, b) = (truth.data(), estimate.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect::<Vec<f64>>();
    let mu_a = blur(a, h, w, &g);
    let mu_b = blur(b, h, w, &g);
    let aa = blur(&prod(&|p, _| p * p), h, w, &g);
    let bb = blur(&prod(&|_, q| q * q), h, w, &g);
    let ab = blur(&prod(&|p, q| p * q), h, w, &g);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// SSIM of `[B, C, H, W]` images: magnitudes for two-channel complex data,
/// otherwise the mean over channels. Returns one value per batch item.
pub fn image_ssim(truth: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<Vec<f64>> {
    truth.same_shape(estimate, "ssim")?;
    let (b, c, h, w) = truth.dims4("ssim")?;
    let (t, e, c) = if c == 2 {
        (batch_magnitude(truth)?, batch_magnitude(estimate)?, 1)
    } else {
        (truth.clone(), estimate.clone(), c)
    };
    (0..b)
        .map(|i| {
            let (ti, ei) = (t.item_slice(i), e.item_slice(i));
            let mut sum = 0.0;
            for ch in 0..c {
                let plane = |s: &[f64]| Tensor::from_vec(&[h, w], s[ch * h * w..(ch + 1) * h * w].to_vec());
                sum += ssim(&plane(ti)?, &plane(ei)?)?;
            }
            Ok(sum / c as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_ssim(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        let (h, w) = (a.shape()[0], a.shape()[1]);
        let g1 = gaussian_window();
        let k = SSIM_WINDOW;
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..=h - k {
            for j in 0..=w - k {
                let (mut ma, mut mb) = (0.0, 0.0);
                for u in 0..k {
                    for v in 0..k {
                        let wt = g1[u] * g1[v];
                        ma += wt * a.data()[(i + u) * w + j + v];
                        mb += wt * b.data()[(i + u) * w + j + v];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for u in 0..k {
                    for v in 0..k {
                        let wt = g1[u] * g1[v];
                        let (p, q) = (a.data()[(i + u) * w + j + v] - ma, b.data()[(i + u) * w + j + v] - mb);
                        va += wt * p * p;
                        vb += wt * q * q;
                        cov += wt * p * q;
                    }
                }
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn snr_analytic_cases() {
        let truth = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(snr(&truth, &truth).unwrap(), SNR_CAP_DB);
        let est = Tensor::from_vec(&[2], vec![3.0, 3.5]).unwrap(); // ratio 10
        assert!((snr(&truth, &est).unwrap() - 20.0).abs() < 1e-9);
        let est = Tensor::from_vec(&[2], vec![3.05, 4.0]).unwrap(); // ratio 100
        assert!((snr(&truth, &est).unwrap() - 40.0).abs() < 1e-9);
        assert!(snr(&Tensor::zeros(&[2]), &truth).is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f64>::rand_uniform(&[16, 16], 0.0, 1.0, &mut rng);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 1.0);
        assert!(ssim(&Tensor::zeros(&[10, 16]), &Tensor::zeros(&[10, 16])).is_err());
    }

    #[test]
    fn ssim_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::<f64>::rand_uniform(&[32, 32], 0.0, 1.0, &mut rng);
        let b = a.add(&Tensor::randn(&[32, 32], 0.1, &mut rng)).unwrap().map(|v| v.clamp(0.0, 1.0));
        assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn complex_images_use_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Tensor::<f64>::rand_uniform(&[1, 2, 16, 16], -0.5, 0.5, &mut rng);
        // Conjugation leaves magnitude unchanged.
        let mut conj = t.clone();
        conj.item_slice_mut(0)[256..].iter_mut().for_each(|v| *v = -*v);
        assert_eq!(image_snr(&t, &conj).unwrap(), SNR_CAP_DB);
        assert!((image_ssim(&t, &conj).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Tensor::<f64>::rand_uniform(&[12, 14], 0.0, 1.0, &mut rng);
            let b = Tensor::<f64>::rand_uniform(&[12, 14], 0.0, 1.0, &mut rng);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn snr_of_known_error_norm(seed in 0u64..500, ratio in 1.5f64..1e4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = Tensor::<f64>::randn(&[64], 1.0, &mut rng);
            let noise = Tensor::<f64>::randn(&[64], 1.0, &mut rng);
            let noise = noise.scale(truth.norm_l2() / (ratio * noise.norm_l2()));
            let est = truth.add(&noise).unwrap();
            prop_assert!((snr(&truth, &est).unwrap() - 20.0 * ratio.log10()).abs() < 1e-9);
        }
    }
}
