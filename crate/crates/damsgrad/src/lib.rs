//! The d-AmsGrad optimizer family (SGD, Adam, AmsGrad, d-AmsGrad) with a
//! decayed-maximum second-momentum rule, replacement-interval analysis, a
//! small MLP with analytic backprop, and deterministic benchmark drivers.
//!
//! Core math is generic over the scalar type via [`Scalar`]; the benchmark
//! harness and everything downstream of it run in double precision ([`Real`]).

pub mod analysis;
pub mod benchmarks;
mod error;
pub mod network;
pub mod optim;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the benchmark harness and the CLI.
pub type Real = f64;
