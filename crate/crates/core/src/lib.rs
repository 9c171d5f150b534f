//! Power flow solvability prediction.
//!
//! A Newton-Raphson AC power flow solver labels injection samples as
//! solvable or not; a small MLP classifier learns the solvability region from
//! as few labels as possible through pool-based, batch-mode active learning
//! with uncertainty sampling.
//!
//! Modules, bottom up:
//!
//! - [`network`]: case files, network model, bus admittance matrix.
//! - [`powerflow`]: Newton-Raphson solver and the solvability oracle.
//! - [`sampling`]: injection sampling specs, pools, normalization, splits.
//! - [`mlp`]: the softmax MLP classifier.
//! - [`active`]: acquisition functions, under-sampling, the active loop.
//! - [`harness`]: experiment configs, label cache, metrics, CLI plumbing.

pub mod network;
pub mod powerflow;
pub mod sampling;
pub mod mlp;
pub mod active;
pub mod seed;
pub mod harness;
