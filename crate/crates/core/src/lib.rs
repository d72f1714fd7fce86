//! Spatio-temporal residual graph attention forecasting of pavement condition.
//!
//! The crate covers the whole pipeline: loading a road-segment graph and its
//! yearly inspection snapshots ([`data`]), a small reverse-mode autodiff engine
//! ([`autodiff`]), the residual GAT + GRU forecaster and its ablation variants
//! ([`model`]), training ([`train`]), regression diagnostics ([`metrics`]),
//! condition-class maintenance prioritization ([`decision`]), explanations
//! ([`explain`]) and a synthetic network generator ([`synth`]).
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod decision;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod train;
pub mod workflow;

mod error;

pub use error::{Error, Result};
