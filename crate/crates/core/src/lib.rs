//! Blind single-image super-resolution by alternating proximal-gradient
//! updates of a blur kernel and a high-resolution image.
//!
//! The observation model is `Y = (X ⊗ K)↓s + N`: a high-resolution image `X`
//! blurred by a non-negative unit-sum kernel `K`, subsampled by keeping the
//! upper-left pixel of each `s × s` block, plus white Gaussian noise.
//!
//! - [`imgcore`]: image/kernel containers, luma, bicubic resampling, file I/O.
//! - [`degrade`]: kernel synthesis and the forward model.
//! - [`operators`]: patch unfolding, strided transposed convolution, adjuster.
//! - [`solver`]: the kernel-then-image stage loop with pluggable image prox.
//! - [`metrics`]: PSNR/SSIM on luma, kernel error, stage-weighted loss.
//! - [`harness`]: CLI commands and the seeded benchmark runner.

pub mod degrade;
pub mod error;
pub mod harness;
pub mod imgcore;
pub mod metrics;
pub mod operators;
pub mod solver;

pub use error::{Error, Result};
pub use imgcore::{Boundary, Image, Kernel};
