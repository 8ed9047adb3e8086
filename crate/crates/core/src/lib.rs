//! Runtime out-of-distribution (OOD) monitoring for feedforward and
//! convolutional classifiers.
//!
//! The crate covers the whole pipeline:
//!
//! - [`tensor`]: shaped f32 arrays and the linear algebra the monitors need
//! - [`nn`]: network representation, forward traces, gradients, and a small
//!   fixture trainer
//! - [`data`]: dataset container, splits, synthetic in-distribution data, and
//!   the generated-OOD taxonomy (perturbations, noise, adversarial)
//! - [`monitors`]: twenty monitor templates, fitting, scoring, threshold
//!   calibration, and verdicts
//! - [`optimize`]: objective construction, random/grid/gradient search, and
//!   the multi-objective weight sweep with Pareto front extraction
//! - [`evaluate`]: accuracy, AUROC with confidence intervals, rank tables,
//!   and CSV/JSON/SVG report emission
//!
//! Everything is deterministic given explicit seeds: reductions run in a
//! fixed order and randomized operations are pure functions of their inputs
//! and seed.

// Index-based loops are clearer than iterator chains for the matrix/tensor
// kernels in this crate.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod evaluate;
pub mod monitors;
pub mod nn;
pub mod optimize;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
