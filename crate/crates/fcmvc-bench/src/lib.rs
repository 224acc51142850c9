//! Shared fixtures for the criterion benchmarks.

use fcmvc::harness::{apply_missing, generate_synthetic, SyntheticSpec};
use fcmvc::registry::ViewBatch;
use fcmvc::solver::{init_first_view, ConsensusState, SolverConfig};
use fcmvc::Result;

/// Solver config with the convergence test disabled so every benchmarked
/// integration performs exactly `max_iters` iterations.
pub fn pinned_config(iters: usize) -> SolverConfig {
    SolverConfig { epsilon: 1e-300, max_iters: iters, ..SolverConfig::default() }
}

/// A two-view planted-cluster stream: the consensus after view 1 plus the
/// incoming view 2, optionally corrupted at the given missing ratio.
pub fn stream_fixture(
    n: usize,
    k: usize,
    d: usize,
    ratio: f64,
    seed: u64,
) -> Result<(ConsensusState, ViewBatch)> {
    let spec = SyntheticSpec {
        n,
        k,
        views: 2,
        dims: vec![d; 2],
        separation: 10.0,
        seed,
    };
    let data = generate_synthetic(&spec)?;
    let views = if ratio > 0.0 {
        apply_missing(&data.views, ratio, seed)?.0
    } else {
        data.views
    };
    let state = init_first_view(&views[0], k, &pinned_config(1))?;
    Ok((state, views[1].clone()))
}
