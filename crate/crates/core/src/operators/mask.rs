//! Variable-density Cartesian sampling masks.
//!
//! Masks are stored in centered k-space layout: entry `(i, j)` holds the
//! frequency `(i - H/2, j - W/2)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const BITSET_MAGIC: &[u8; 4] = b"PRMK";

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    h: usize,
    w: usize,
    included: Vec<bool>,
    /// Target fraction the mask was generated for.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub h: usize,
    pub w: usize,
    pub fraction: f64,
    pub decay_power: f64,
    /// Side of the always-sampled center block; `None` uses `ceil(min(H, W) / 8)`.
    pub calib_size: Option<usize>,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(h: usize, w: usize, fraction: f64, seed: u64) -> Self {
        MaskSpec {
            h,
            w,
            fraction,
            decay_power: 3.0,
            calib_size: None,
            seed,
        }
    }
}

/// Normalized distance of a centered-layout index from the k-space center, in `[0, 1]`.
pub fn radial_distance(i: usize, j: usize, h: usize, w: usize) -> f64 {
    let dy = (i as f64 - (h / 2) as f64) / (h as f64 / 2.0).max(1.0);
    let dx = (j as f64 - (w / 2) as f64) / (w as f64 / 2.0).max(1.0);
    ((dy * dy + dx * dx) / 2.0).sqrt().min(1.0)
}

pub fn target_count(h: usize, w: usize, fraction: f64) -> usize {
    ((fraction * (h * w) as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn generate_mask(spec: &MaskSpec) -> Result<SamplingMask> {
    let MaskSpec { h, w, fraction, decay_power, .. } = *spec;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("sampling fraction {fraction} outside (0, 1]")));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    let calib = spec.calib_size.unwrap_or_else(|| h.min(w).div_ceil(8));
    if calib > h.min(w) {
        return Err(Error::InvalidArgument(format!("calibration block {calib} exceeds {h}x{w}")));
    }
    let n = h * w;
    let target = target_count(h, w, fraction);
    if calib * calib > target {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} gives {target} samples, fewer than the {calib}x{calib} calibration block"
        )));
    }
    let mut included = vec![false; n];
    let (r0, c0) = (h / 2 - calib / 2, w / 2 - calib / 2);
    for i in r0..r0 + calib {
        for j in c0..c0 + calib {
            included[i * w + j] = true;
        }
    }
    let remaining = target - calib * calib;

    let density: Vec<f64> = (0..n)
        .map(|idx| (1.0 - radial_distance(idx / w, idx % w, h, w)).max(0.0).powf(decay_power))
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| !included[i]).collect();

    // Scale so the expected number of Bernoulli draws equals `remaining`.
    let expected = |c: f64| free.iter().map(|&i| (c * density[i]).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected(hi) < remaining as f64 && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < remaining as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tie: Vec<f64> = vec![0.0; n];
    let mut chosen = 0usize;
    for &i in &free {
        let u: f64 = rng.random();
        tie[i] = rng.random();
        if u < (hi * density[i]).min(1.0) {
            included[i] = true;
            chosen += 1;
        }
    }

    // Cardinality correction: drop the least likely picks or add the most likely misses.
    if chosen > remaining {
        let mut picked: Vec<usize> = free.iter().copied().filter(|&i| included[i]).collect();
        picked.sort_by(|&a, &b| density[a].total_cmp(&density[b]).then(tie[a].total_cmp(&tie[b])));
        for &i in picked.iter().take(chosen - remaining) {
            included[i] = false;
        }
    } else if chosen < remaining {
        let mut missed: Vec<usize> = free.iter().copied().filter(|&i| !included[i]).collect();
        missed.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(tie[a].total_cmp(&tie[b])));
        for &i in missed.iter().take(remaining - chosen) {
            included[i] = true;
        }
    }
    Ok(SamplingMask { h, w, included, fraction })
}

impl SamplingMask {
    pub fn full(h: usize, w: usize) -> Self {
        SamplingMask { h, w, included: vec![true; h * w], fraction: 1.0 }
    }

    pub fn from_included(h: usize, w: usize, included: Vec<bool>, fraction: f64) -> Result<Self> {
        if included.len() != h * w {
            return Err(Error::shape("SamplingMask", h * w, included.len()));
        }
        Ok(SamplingMask { h, w, included, fraction })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.included[i * self.w + j]
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn realized_fraction(&self) -> f64 {
        self.count() as f64 / (self.h * self.w) as f64
    }

    /// Row-major centered-layout indices of the sampled entries.
    pub fn sampled_indices(&self) -> Vec<usize> {
        (0..self.included.len()).filter(|&i| self.included[i]).collect()
    }

    /// Packed bits, row-major, least significant bit first.
    pub fn packed_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.included.len().div_ceil(8)];
        for (i, &b) in self.included.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    /// 64-bit FNV-1a hash of the dimensions and packed bits; identifies a mask in
    /// measurement files.
    pub fn id(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let dims = [(self.h as u32).to_le_bytes(), (self.w as u32).to_le_bytes()];
        for byte in dims.iter().flatten().chain(self.packed_bits().iter()) {
            h ^= *byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Bitset file: magic, u32 H, u32 W, f64 target fraction, packed bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BITSET_MAGIC);
        out.extend_from_slice(&(self.h as u32).to_le_bytes());
        out.extend_from_slice(&(self.w as u32).to_le_bytes());
        out.extend_from_slice(&self.fraction.to_le_bytes());
        out.extend_from_slice(&self.packed_bits());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != BITSET_MAGIC {
            return Err(Error::parse("mask file", "bad magic or truncated header"));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let fraction = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n = h.checked_mul(w).ok_or_else(|| Error::parse("mask file", "dimension overflow"))?;
        let body = &bytes[20..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::parse("mask file", format!("expected {} bitset bytes, found {}", n.div_ceil(8), body.len())));
        }
        let included = (0..n).map(|i| body[i / 8] & (1 << (i % 8)) != 0).collect();
        Ok(SamplingMask { h, w, included, fraction })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// 8-bit rendering, 255 for sampled entries.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.included.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn from_gray8(h: usize, w: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != h * w {
            return Err(Error::shape("mask image", h * w, pixels.len()));
        }
        let included: Vec<bool> = pixels.iter().map(|&p| p >= 128).collect();
        let fraction = included.iter().filter(|&&b| b).count() as f64 / (h * w) as f64;
        Ok(SamplingMask { h, w, included, fraction })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_fraction_samples_everything() {
        let m = generate_mask(&MaskSpec::new(16, 16, 1.0, 0)).unwrap();
        assert_eq!(m.count(), 256);
    }

    #[test]
    fn exact_cardinality_and_calibration_block() {
        for seed in 0..5 {
            let m = generate_mask(&MaskSpec::new(64, 64, 0.2, seed)).unwrap();
            assert_eq!(m.count(), 820); // ceil(0.2 * 4096)
            for i in 28..36 {
                for j in 28..36 {
                    assert!(m.get(i, j));
                }
            }
        }
    }

    #[test]
    fn center_is_denser_than_periphery() {
        let (h, w) = (64, 64);
        let (mut inner, mut inner_n, mut outer, mut outer_n) = (0.0, 0.0, 0.0, 0.0);
        for seed in 0..100 {
            let m = generate_mask(&MaskSpec::new(h, w, 0.2, seed)).unwrap();
            for i in 0..h {
                for j in 0..w {
                    let r = radial_distance(i, j, h, w);
                    let v = m.get(i, j) as u8 as f64;
                    if r < 0.25 {
                        inner += v;
                        inner_n += 1.0;
                    } else if r >= 0.75 {
                        outer += v;
                        outer_n += 1.0;
                    }
                }
            }
        }
        let (pi, po) = (inner / inner_n, outer / outer_n);
        assert!(pi >= 2.0 * po, "inner {pi} outer {po}");
    }

    #[test]
    fn too_small_fraction_is_rejected() {
        let err = generate_mask(&MaskSpec::new(64, 64, 0.01, 0)).unwrap_err();
        assert!(err.to_string().contains("calibration"));
        assert!(generate_mask(&MaskSpec::new(8, 8, 0.0, 0)).is_err());
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = generate_mask(&MaskSpec::new(32, 32, 0.3, 9)).unwrap();
        let b = generate_mask(&MaskSpec::new(32, 32, 0.3, 9)).unwrap();
        let c = generate_mask(&MaskSpec::new(32, 32, 0.3, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn bitset_round_trip() {
        let m = generate_mask(&MaskSpec::new(20, 12, 0.4, 3)).unwrap();
        let bytes = m.to_bytes();
        let back = SamplingMask::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        assert!(SamplingMask::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let g = SamplingMask::from_gray8(20, 12, &m.to_gray8()).unwrap();
        assert_eq!(g.included(), m.included());
    }
}
