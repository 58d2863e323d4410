use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::operators::LinearOperator;
use crate::tensor::{Real, Tensor};

pub const MEASUREMENT_MAGIC: &[u8; 4] = b"PRMS";
pub const MEASUREMENT_VERSION: u32 = 1;

/// `y = Phi x + v` with i.i.d. Gaussian `v` of standard deviation `sigma` per real component.
pub fn synthesize_measurements<T: Real, R: Rng + ?Sized>(x: &Tensor<T>, op: &dyn LinearOperator<T>, sigma: f64, rng: &mut R) -> Result<Tensor<T>> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be non-negative")));
    }
    let mut y = op.forward(x)?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in y.data_mut() {
            *v += T::of(normal.sample(rng));
        }
    }
    Ok(y)
}

/// One complex measurement vector over the sampled set of a mask.
///
/// Layout: magic, version u32, H u32, W u32, mask id u64, sigma f64, count u64,
/// then `count` little-endian f32 (re, im) pairs in row-major mask order.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFile {
    pub h: usize,
    pub w: usize,
    pub mask_id: u64,
    pub sigma: f64,
    pub values: Vec<[f32; 2]>,
}

impl MeasurementFile {
    /// From item `i` of a `[B, 2, M]` measurement tensor.
    pub fn from_tensor<T: Real>(y: &Tensor<T>, i: usize, h: usize, w: usize, mask_id: u64, sigma: f64) -> Result<Self> {
        if y.ndim() != 3 || y.shape()[1] != 2 || i >= y.shape()[0] {
            return Err(Error::shape("MeasurementFile", "[B, 2, M]", crate::tensor::shape_str(y.shape())));
        }
        let item = y.item_slice(i);
        let m = y.shape()[2];
        let values = (0..m).map(|k| [item[k].as_f64() as f32, item[m + k].as_f64() as f32]).collect();
        Ok(MeasurementFile { h, w, mask_id, sigma, values })
    }

    /// `[1, 2, M]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let m = self.values.len();
        let mut data = Vec::with_capacity(2 * m);
        data.extend(self.values.iter().map(|v| T::of(v[0] as f64)));
        data.extend(self.values.iter().map(|v| T::of(v[1] as f64)));
        Tensor::from_vec(&[1, 2, m], data).expect("consistent size")
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MEASUREMENT_MAGIC)?;
        w.write_all(&MEASUREMENT_VERSION.to_le_bytes())?;
        w.write_all(&(self.h as u32).to_le_bytes())?;
        w.write_all(&(self.w as u32).to_le_bytes())?;
        w.write_all(&self.mask_id.to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v[0].to_le_bytes())?;
            w.write_all(&v[1].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.values.len());
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ctx = "measurement file";
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::parse(ctx, "truncated header"))?;
        if &magic != MEASUREMENT_MAGIC {
            return Err(Error::parse(ctx, "bad magic"));
        }
        let mut take = |n: usize| -> Result<Vec<u8>> {
            if r.len() < n {
                return Err(Error::parse(ctx, "truncated header"));
            }
            let (a, b) = r.split_at(n);
            r = b;
            Ok(a.to_vec())
        };
        let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let u64_at = |b: Vec<u8>| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u32_at(take(4)?);
        if version != MEASUREMENT_VERSION {
            return Err(Error::parse(ctx, format!("unsupported version {version}")));
        }
        let h = u32_at(take(4)?) as usize;
        let w = u32_at(take(4)?) as usize;
        let mask_id = u64_at(take(8)?);
        let sigma = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let count = u64_at(take(8)?);
        if count > (h as u64) * (w as u64) {
            return Err(Error::parse(ctx, format!("{count} values exceed a {h}x{w} grid")));
        }
        let body = take(8 * count as usize).map_err(|_| Error::parse(ctx, "truncated values"))?;
        if !r.is_empty() {
            return Err(Error::parse(ctx, "trailing bytes"));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| [f32::from_le_bytes(c[..4].try_into().expect("4")), f32::from_le_bytes(c[4..].try_into().expect("4"))])
            .collect();
        Ok(MeasurementFile { h, w, mask_id, sigma, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_mask, MaskSpec, MaskedFourier, SamplingMask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_exact() {
        let op = MaskedFourier::<f64>::new(generate_mask(&MaskSpec::new(16, 16, 0.3, 1)).unwrap());
        let x = Tensor::randn(&[2, 2, 16, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let y = synthesize_measurements(&x, &op, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(y, op.forward(&x).unwrap());
    }

    #[test]
    fn full_mask_adjoint_recovers_image() {
        let op = MaskedFourier::<f64>::new(SamplingMask::full(16, 16));
        let x = Tensor::randn(&[1, 2, 16, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let y = synthesize_measurements(&x, &op, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(op.adjoint(&y).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn empirical_noise_matches_sigma() {
        let op = MaskedFourier::<f64>::new(SamplingMask::full(64, 64));
        let x = Tensor::zeros(&[2, 2, 64, 64]);
        let sigma = 0.05;
        let y = synthesize_measurements(&x, &op, sigma, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(y.len() >= 10_000);
        let std = (y.norm_sqr() / y.len() as f64).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.05, "{std}");
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let mask = generate_mask(&MaskSpec::new(16, 16, 0.3, 4)).unwrap();
        let op = MaskedFourier::<f64>::new(mask.clone());
        let x = Tensor::randn(&[1, 2, 16, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let y = op.forward(&x).unwrap();
        let f = MeasurementFile::from_tensor(&y, 0, 16, 16, mask.id(), 0.01).unwrap();
        let bytes = f.to_bytes();
        let back = MeasurementFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.values.len(), op.num_samples());
        assert!(back.to_tensor::<f64>().max_abs_diff(&y).unwrap() < 1e-6);
    }

    #[test]
    fn malformed_files_are_errors() {
        let f = MeasurementFile { h: 4, w: 4, mask_id: 9, sigma: 0.0, values: vec![[1.0, 2.0]; 3] };
        let bytes = f.to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(MeasurementFile::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MeasurementFile::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(MeasurementFile::from_bytes(&long).is_err());
    }
}
