//! Quantization error feedback for distributed graph filters.
//!
//! Nodes running an FIR or ARMA graph filter exchange finite-precision
//! states. Each node keeps the error of its own last quantization, scales it
//! by a locally stored weight and subtracts it during the next fusion step.
//! This crate designs those weights in closed form for deterministic graphs
//! and for graphs whose edges fail at random, predicts the resulting output
//! noise power, and checks the predictions with a seeded Monte Carlo harness.
//!
//! Module map:
//!
//! - [`graph`]: graphs, shift operators, spectra and random edge sampling.
//! - [`quantizer`]: uniform quantizer with optional subtractive dither.
//! - [`filters`]: exact and quantized FIR/ARMA execution with error feedback.
//! - [`design`]: Gram matrices, Gramians, the kernel tensor, noise
//!   predictions and closed-form feedback weights.
//! - [`harness`]: scenarios, SNR metrics, Monte Carlo oracles and results.

pub mod design;
pub mod error;
pub mod filters;
pub mod graph;
pub mod harness;
pub mod quantizer;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
