//! Bayesian neural networks trained by nested sampling.
//!
//! The crate samples the full posterior of small multi-layer perceptrons with
//! a derivative-free nested sampler, estimates the Bayesian evidence of each
//! network, and combines networks into evidence-weighted ensembles.
//!
//! The pieces, bottom-up:
//!
//! * [`data`]: table loading, whitening and seeded train/test splits.
//! * [`network`]: architectures and the forward map.
//! * [`model`]: prior granularity, parameter layout and model names.
//! * [`transform`]: unit-hypercube to physical parameter mapping.
//! * [`likelihood`]: Gaussian log-likelihood over a training split.
//! * [`sampler`]: the nested sampling engine.
//! * [`posterior`]: predictive summaries and test-set metrics.
//! * [`ensemble`]: posterior over models and combined predictions.
//! * [`oracle`]: closed-form and quadrature evidences used for validation.
//! * [`scorecard`]: the acceptance checks shared by tests and the CLI.

// NaN must fail these guards, which `!(x > 0.0)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
mod error;
pub mod likelihood;
pub mod math;
pub mod model;
pub mod network;
pub mod oracle;
pub mod posterior;
pub mod sampler;
pub mod scorecard;
pub mod transform;

pub use error::{Error, Result};
