use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::ComplexImage;
use crate::tensor::Tensor;

/// Parameters of the random-ellipse phantom family.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub intensity_lo: f64,
    pub intensity_hi: f64,
    pub texture_amplitude: f64,
    /// Peak absolute phase in radians.
    pub phase_amplitude: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(size: usize, seed: u64) -> Self {
        PhantomSpec {
            size,
            min_ellipses: 4,
            max_ellipses: 9,
            intensity_lo: 0.1,
            intensity_hi: 0.6,
            texture_amplitude: 0.03,
            phase_amplitude: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || !self.size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("phantom size {} must be a power of two >= 16", self.size)));
        }
        if self.min_ellipses > self.max_ellipses || !(self.intensity_lo <= self.intensity_hi) || self.texture_amplitude < 0.0 {
            return Err(Error::InvalidArgument(format!("inconsistent phantom spec {self:?}")));
        }
        Ok(())
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos: f64,
    sin: f64,
    intensity: f64,
    /// Relative drop of intensity from center to rim.
    falloff: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, spec: &PhantomSpec, outer: bool) -> Self {
        let theta = rng.random_range(0.0..PI);
        let (ry, rx, cy, cx) = if outer {
            (rng.random_range(0.6..0.85), rng.random_range(0.55..0.8), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
        } else {
            (rng.random_range(0.08..0.35), rng.random_range(0.08..0.35), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        };
        Ellipse {
            cy,
            cx,
            ry,
            rx,
            cos: theta.cos(),
            sin: theta.sin(),
            intensity: rng.random_range(spec.intensity_lo..=spec.intensity_hi),
            falloff: rng.random_range(0.0..0.4),
        }
    }

    /// Intensity at normalized coordinates in `[-1, 1]^2`.
    fn value(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        let rho2 = u * u + v * v;
        if rho2 <= 1.0 {
            self.intensity * (1.0 - self.falloff * rho2)
        } else {
            0.0
        }
    }
}

/// Sum of random plane waves with low spatial frequency, normalized to unit peak.
fn smooth_field(rng: &mut ChaCha8Rng, n: usize, waves: usize, max_freq: f64) -> Vec<f64> {
    let params: Vec<(f64, f64, f64)> = (0..waves)
        .map(|_| (rng.random_range(-max_freq..max_freq), rng.random_range(-max_freq..max_freq), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (y, x) = (i as f64 / n as f64, j as f64 / n as f64);
            out[i * n + j] = params.iter().map(|&(fy, fx, p)| (2.0 * PI * (fy * y + fx * x) + p).sin()).sum::<f64>();
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

/// Random complex phantom: ellipses with smooth intensity, additive texture and a smooth
/// phase map; the magnitude is clamped to `[0, 1]`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<ComplexImage<f64>> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let count = rng.random_range(spec.min_ellipses..=spec.max_ellipses);
    let ellipses: Vec<Ellipse> = (0..count).map(|k| Ellipse::random(&mut rng, spec, k == 0)).collect();
    let texture = smooth_field(&mut rng, n, 12, 10.0);
    let phase = smooth_field(&mut rng, n, 3, 1.5);
    let mut real = Tensor::zeros(&[n, n]);
    let mut imag = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let y = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
            let x = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
            let base: f64 = ellipses.iter().map(|e| e.value(y, x)).sum();
            let m = (base + spec.texture_amplitude * texture[i * n + j]).clamp(0.0, 1.0);
            let p = spec.phase_amplitude * phase[i * n + j];
            real.data_mut()[i * n + j] = m * p.cos();
            imag.data_mut()[i * n + j] = m * p.sin();
        }
    }
    ComplexImage::new(real, imag)
}

/// Random RGB texture in `[0, 1]`, `[3, size, size]`: a smooth color gradient with
/// solid shapes and fine stripes, giving edges that box averaging blurs.
pub fn generate_texture(size: usize, seed: u64) -> Result<Tensor<f64>> {
    if size < 8 {
        return Err(Error::InvalidArgument(format!("texture size {size} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size;
    let mut img = Tensor::zeros(&[3, n, n]);
    let base: Vec<[f64; 3]> = (0..2).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let angle = rng.random_range(0.0..2.0 * PI);
    for i in 0..n {
        for j in 0..n {
            let t = 0.5 + 0.5 * ((i as f64 / n as f64 - 0.5) * angle.sin() + (j as f64 / n as f64 - 0.5) * angle.cos());
            for c in 0..3 {
                img.data_mut()[c * n * n + i * n + j] = base[0][c] * (1.0 - t) + base[1][c] * t;
            }
        }
    }
    let shapes = rng.random_range(3..8);
    for _ in 0..shapes {
        let color: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let (cy, cx) = (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64));
        let r = rng.random_range(n as f64 / 10.0..n as f64 / 3.0);
        let square = rng.random_bool(0.5);
        let stripes = rng.random_bool(0.4).then(|| (rng.random_range(0.0..PI), rng.random_range(2.5..6.0)));
        for i in 0..n {
            for j in 0..n {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                let inside = if square { dy.abs().max(dx.abs()) <= r } else { dy * dy + dx * dx <= r * r };
                if !inside {
                    continue;
                }
                let shade = match stripes {
                    Some((a, period)) => {
                        if ((dx * a.cos() + dy * a.sin()) / period).rem_euclid(2.0) < 1.0 {
                            1.0
                        } else {
                            0.5
                        }
                    }
                    None => 1.0,
                };
                for c in 0..3 {
                    img.data_mut()[c * n * n + i * n + j] = color[c] * shade;
                }
            }
        }
    }
    Ok(img)
}
