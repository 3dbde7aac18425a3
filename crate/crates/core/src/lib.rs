//! Lossy multi-processor approximate message passing (MP-AMP).
//!
//! A fusion center and `P` worker nodes jointly reconstruct a sparse signal
//! from distributed linear measurements, exchanging lossily compressed
//! messages each iteration. This crate provides:
//!
//! - [`model`]: the Bernoulli-Gaussian signal prior and its posterior-mean
//!   (MMSE) scalar denoiser,
//! - [`sevo`]: state evolution, the scalar recursion that predicts the
//!   per-iteration effective noise variance and MSE of (MP-)AMP,
//! - [`rd`]: rate-distortion models mapping per-iteration coding rates to
//!   quantization distortions (Gaussian closed form and Blahut-Arimoto),
//! - [`dpopt`]: a dynamic program selecting the coding-rate schedule that
//!   minimizes combined computation + communication cost subject to a final
//!   MSE target,
//! - [`pareto`]: sweeps over cost ratios and MSE targets, dominance
//!   filtering of (iterations, aggregate rate, MSE) tuples, a numerical
//!   convexity check of the achievable surface, and asymptotic-form fits,
//! - [`sim`]: a Monte Carlo simulator running centralized AMP and
//!   single-process MP-AMP on synthetic instances,
//! - [`harness`]: a multi-worker realization of MP-AMP with a framed wire
//!   protocol and exact byte accounting.

pub mod dpopt;
mod error;
pub mod harness;
pub mod model;
pub mod pareto;
pub mod quad;
pub mod rd;
pub mod sevo;
pub mod sim;

pub use error::{Error, Result};
