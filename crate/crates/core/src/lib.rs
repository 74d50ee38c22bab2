//! Kernel-based universal hypothesis testing: MMD and KSD statistics,
//! distribution-free and data-driven thresholds, exact finite-alphabet
//! large-deviations checks, and an experiment harness.
//!
//! All numerics are generic over a scalar type (`f32` or `f64`) through
//! [`Scalar`]; the aliases below fix `f64` for everyday use.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod ksd;
pub mod large_deviations;
pub mod mmd;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod targets;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::Scalar;

/// Default-precision kernel specification.
pub type KernelSpec = kernels::KernelSpec<f64>;
/// Default-precision sample.
pub type Sample = kernels::Sample<f64>;
/// Default-precision model distribution.
pub type TargetModel = targets::TargetModel<f64>;
/// Default-precision finite distribution.
pub type FiniteDist = large_deviations::FiniteDist<f64>;
/// Default-precision Stein context.
pub type SteinContext = ksd::SteinContext<f64>;
/// Default-precision MMD value.
pub type MmdValue = mmd::MmdValue<f64>;
