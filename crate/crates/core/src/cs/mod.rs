//! Classical sparse-recovery baselines: shrinkage, Haar wavelets, TV, ISTA/FISTA
//! and conjugate gradient.
//!
//! Solvers work in double precision on batched images `[B, C, H, W]`. Two-channel
//! images are treated as complex (real, imaginary) and shrunk by magnitude.

mod cg;
mod shrink;
mod solvers;
mod tune;
pub mod tv;
pub mod wavelet;

pub use cg::{conjugate_gradient, ridge_solve, CgResult};
pub use shrink::{soft_threshold, soft_threshold_complex, soft_threshold_scalar};
pub use solvers::{fista, fista_with, ista, ista_with, objective, SolveOptions};
pub use tune::{tune_reg_weight, TuneResult};
pub use tv::{tv_norm, tv_prox};
pub use wavelet::{wavelet_forward, wavelet_inverse};

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Wavelet,
    Tv,
    Identity,
}

impl FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wavelet" | "wv" => Ok(Transform::Wavelet),
            "tv" => Ok(Transform::Tv),
            "identity" => Ok(Transform::Identity),
            _ => Err(Error::InvalidArgument(format!("unknown transform '{s}' (wavelet|tv|identity)"))),
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transform::Wavelet => "wavelet",
            Transform::Tv => "tv",
            Transform::Identity => "identity",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityConfig {
    pub transform: Transform,
    pub reg_weight: f64,
    pub wavelet_levels: usize,
    pub tv_inner_iters: usize,
}

impl SparsityConfig {
    pub fn new(transform: Transform, reg_weight: f64) -> Self {
        SparsityConfig { transform, reg_weight, wavelet_levels: 3, tv_inner_iters: tv::DEFAULT_TV_ITERS }
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if !(self.reg_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("reg_weight must be non-negative, got {}", self.reg_weight)));
        }
        if self.transform == Transform::Wavelet && (self.wavelet_levels == 0 || self.wavelet_levels > wavelet::max_levels(h, w)) {
            return Err(Error::InvalidArgument(format!(
                "wavelet_levels {} not in 1..={} for {h}x{w}",
                self.wavelet_levels,
                wavelet::max_levels(h, w)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub objective: Vec<f64>,
    pub residual: Vec<f64>,
    pub snapshots: Option<Vec<Tensor<f64>>>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,residual\n");
        for (k, (o, r)) in self.objective.iter().zip(&self.residual).enumerate() {
            writeln!(out, "{},{:e},{:e}", k + 1, o, r).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
