//! Sign-based stochastic optimizers and a harness that checks their
//! small-batch convergence guarantees on synthetic problems.
//!
//! Modules, bottom-up:
//!
//! * [`numeric`]: vector kernels and reproducible random streams.
//! * [`problems`]: objectives with exact gradients, known coordinate
//!   Lipschitz constants and a noise oracle of known scale.
//! * [`dither`]: annealed dither schedule and dithered-sign statistics.
//! * [`theory`]: the SNR-weighted stationarity measure, sign-failure bounds
//!   and rate right-hand sides.
//! * [`optimizers`]: SGD, SignSGD(-M), dithered variants and the hybrid
//!   switcher as pure state transitions.
//! * [`harness`]: configuration, runs, records, suites and the checks
//!   behind `selftest`.

// `!(x >= 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dither;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod optimizers;
pub mod problems;
pub mod theory;

pub use error::{Error, Result};
pub use numeric::{ParamVector, RngStream};
