//! Simulation core for phonon-mediated state transfer between two
//! superconducting qubits joined by a lossy surface-acoustic-wave channel.
//!
//! Everything here is `no_std` with `alloc`; file formats, configuration and
//! the command line live in the `phononlab` crate.

#![no_std]
// `!(x > 0.0)` is the NaN-rejecting guard used for every parameter check
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// dense index loops read closer to the matrix formulas
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod device;
pub mod netsim;
pub mod pulseshape;
pub mod qmath;
pub mod sawmodel;
pub mod tomo;

use alloc::string::String;

pub use num_complex::Complex64;

/// Errors raised by the core. The CLI maps them onto exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("state invariant violated at t = {t:e} s ({what}); retry with dt <= {suggested_dt:e} s")]
    InvariantViolation { t: f64, what: &'static str, suggested_dt: f64 },
    #[error("operator is not Hermitian")]
    NotHermitian,
    #[error("matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("frequency {0:e} Hz lies outside the response grid")]
    OutOfGrid(f64),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

/// 2π, handy for converting Hz to rad/s.
pub const TWO_PI: f64 = core::f64::consts::TAU;
