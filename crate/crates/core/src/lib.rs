//! Compressive image recovery with unrolled proximal-gradient networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`nn`]: dense tensors, differentiable layers, Adam and a
//!   finite-difference gradient oracle.
//! * [`operators`]: measurement operators (masked unitary Fourier, box
//!   downsampling), sampling masks, the nullspace filter and data consistency.
//! * [`cs`]: soft-thresholding, Haar wavelets, TV proximal, ISTA/FISTA and CG.
//! * [`model`]: the ResNet proximal generator, the discriminator and the
//!   unrolled K-copy network.
//! * [`train`]: losses, GAN warm-up, gradient clipping and the training loop.
//! * [`eval`]: SNR/SSIM, baselines and the architecture sweep harness.
//! * [`data`]: synthetic phantoms and textures, file formats and datasets.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cs;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod model;
pub mod eval;
pub mod nn;
pub mod operators;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
