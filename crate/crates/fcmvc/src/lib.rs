//! Streaming incomplete multi-view clustering.
//!
//! The engine consumes views of a growing sample collection one at a time.
//! Each view may cover only a subset of the samples seen so far; a
//! row-orthonormal consensus matrix is updated per arriving view and never
//! revisits past view data. Final cluster labels come from k-means on the
//! consensus columns, and the usual external clustering metrics are provided
//! for evaluation.
//!
//! Module map:
//! - [`mat`], [`svd`]: dense matrix container and deterministic thin SVD.
//! - [`registry`]: sample identity tracking and indicator construction.
//! - [`solver`]: per-view alternating updates of the consensus matrix.
//! - [`labeling`]: k-means and clustering metrics.
//! - [`checkpoint`]: versioned serializable snapshots of solver state.
//! - [`harness`]: synthetic data, missing-data protocol, experiment sweeps.

pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod labeling;
pub mod mat;
pub mod registry;
pub mod solver;
pub mod svd;

pub use error::{Error, Result};
pub use mat::Matrix;
pub use svd::{solve_trace_max, thin_svd, ThinSvd};
