//! Streaming consensus solver.
//!
//! One row-orthonormal consensus matrix z (k x n) summarizes every sample
//! seen so far. Each arriving view triggers an alternating scheme over three
//! blocks, each an orthogonal Procrustes step:
//!
//! - z-step: maximize tr(z a) over row-orthonormal z, where the coefficient
//!   a scatters the view evidence (x^T h) and the alignment evidence
//!   (z_prev^T w^T) into registry rows;
//! - w-step: maximize tr(w^T b), b = z restricted to old columns times
//!   z_prev^T, a k x k rotation aligning the old consensus to the new one;
//! - h-step: maximize tr(h^T c), c = x times the gathered z columns, the
//!   orthonormal view basis.
//!
//! The recorded objective is the zero-padded form
//!
//!   J = 1/2 ||x m1^T - h z||_F^2 - tr((z m2)^T w z_prev),
//!
//! i.e. the reconstruction treats samples absent from the view as zero
//! vectors. All three updates above are exact coordinate minimizers of J, so
//! the per-iteration trace is non-increasing; on a complete view (m1 a
//! permutation) J coincides with the plain reconstruction-plus-alignment
//! objective. J is bounded below by -sqrt(n_prev) * k^(3/2).
//!
//! Past view data is never revisited: integrating a view consumes only that
//! view's block plus the previous consensus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{kmeans_with_wcss, Partition};
use crate::mat::Matrix;
use crate::registry::{register_view, IndicatorPair, SampleRegistry, ViewBatch};
use crate::svd::{solve_trace_max, thin_svd};

/// How the consensus is seeded from the first view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstViewInit {
    /// Top-k right singular rows of the raw first view (default).
    SvdRows,
    /// Random row-orthonormal matrix from the config seed; kept for
    /// sensitivity checks.
    RandomOrthonormal,
}

/// Solver knobs. `epsilon` is the relative objective-change tolerance
/// |J_{i-1} - J_i| / max(|J_i|, 1e-12) <= epsilon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Seed for randomized paths (only the random first-view init).
    pub seed: u64,
    pub first_view_init: FirstViewInit,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            epsilon: 1e-6,
            max_iters: 100,
            seed: 0,
            first_view_init: FirstViewInit::SvdRows,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be a positive finite number, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Record of one view integration (or of the first-view initialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Objective value after each completed iteration.
    pub objective_trace: Vec<f64>,
    /// Completed iterations (== objective_trace.len()).
    pub iters: usize,
    /// Whether the relative-change test fired before max_iters.
    pub converged: bool,
    /// -sqrt(n_prev) * k^(3/2) for this integration; 0 for the first view.
    pub lower_bound: f64,
}

/// Consensus after some prefix of the stream: the row-orthonormal z, the
/// registry snapshot its columns are aligned to, and the last diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    z: Matrix,
    registry: SampleRegistry,
    k: usize,
    views_seen: usize,
    last_diag: SolveDiagnostics,
}

impl ConsensusState {
    /// Reassembles a state from raw parts (checkpoint restore). Validates
    /// shapes and that z is plausibly row-orthonormal, but never alters the
    /// entries: restored bits flow through untouched.
    pub fn from_parts(
        z: Matrix,
        registry: SampleRegistry,
        k: usize,
        views_seen: usize,
        last_diag: SolveDiagnostics,
    ) -> Result<ConsensusState> {
        if k == 0 {
            return Err(Error::Validation("consensus needs k >= 1".into()));
        }
        if views_seen == 0 {
            return Err(Error::Validation("a consensus state implies at least one view".into()));
        }
        if z.rows() != k {
            return Err(Error::Validation(format!(
                "consensus has {} rows, expected k = {k}",
                z.rows()
            )));
        }
        if z.cols() != registry.len() {
            return Err(Error::Validation(format!(
                "consensus has {} columns for {} registered samples",
                z.cols(),
                registry.len()
            )));
        }
        if registry.len() < k {
            return Err(Error::Validation(format!(
                "only {} samples for k = {k}; row orthonormality impossible",
                registry.len()
            )));
        }
        let defect = z.row_gram_defect();
        if !(defect < 1e-6) {
            return Err(Error::Validation(format!(
                "consensus rows are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(ConsensusState { z, registry, k, views_seen, last_diag })
    }

    /// k x n_total consensus, columns aligned with `registry().ids()`.
    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn registry(&self) -> &SampleRegistry {
        &self.registry
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn views_seen(&self) -> usize {
        self.views_seen
    }

    /// Diagnostics of the most recent integration.
    pub fn last_diagnostics(&self) -> &SolveDiagnostics {
        &self.last_diag
    }
}

/// -sqrt(n_prev) * k^(3/2), the floor under the recorded objective. With no
/// previous samples the alignment term is empty and the floor is 0.
pub fn lower_bound(n_prev: usize, k: usize) -> f64 {
    if n_prev == 0 {
        return 0.0;
    }
    -((n_prev as f64).sqrt() * (k as f64).powf(1.5))
}

/// Seeds the consensus from the first view.
///
/// Default route: thin SVD of the raw d1 x n1 block, z = top-k rows of vt.
/// Requires n1 >= k (row orthonormality needs at least k columns) and
/// d1 >= k (fewer than k nonzero singular directions would leave the tail
/// rows arbitrary).
pub fn init_first_view(batch: &ViewBatch, k: usize, cfg: &SolverConfig) -> Result<ConsensusState> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if batch.view_index != 1 {
        return Err(Error::Validation(format!(
            "first view must carry view_index 1, got {}",
            batch.view_index
        )));
    }
    if batch.len() < k {
        return Err(Error::Config(format!(
            "first view has {} samples, fewer than k = {k}",
            batch.len()
        )));
    }
    if batch.dim() < k {
        return Err(Error::Config(format!(
            "first view has dimension {}, fewer than k = {k}",
            batch.dim()
        )));
    }
    let (registry, _) = register_view(&SampleRegistry::new(), batch)?;
    let z = match cfg.first_view_init {
        FirstViewInit::SvdRows => {
            let f = thin_svd(&batch.data)?;
            Matrix::from_fn(k, batch.len(), |r, c| f.vt.get(r, c))
        }
        FirstViewInit::RandomOrthonormal => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let g = Matrix::from_fn(batch.len(), k, |_, _| rng.sample(StandardNormal));
            thin_svd(&g)?.u.transpose()
        }
    };
    // First-view residual: 1/2 || x - (x z^T) z ||_F^2, the energy outside
    // the consensus row space. Recorded so the trace is never empty.
    let xz = batch.data.mul(&z.transpose());
    let residual = 0.5 * (batch.data.sumsq() - xz.sumsq()).max(0.0);
    let diag = SolveDiagnostics {
        objective_trace: vec![residual],
        iters: 1,
        converged: true,
        lower_bound: lower_bound(0, k),
    };
    Ok(ConsensusState { z, registry, k, views_seen: 1, last_diag: diag })
}

/// a = m1 (x^T h) + m2 (z_prev^T w^T), assembled by scattering both blocks
/// into registry rows. Shape n_total x k.
pub fn build_z_coefficient(
    x: &Matrix,
    h: &Matrix,
    w: &Matrix,
    z_prev: &Matrix,
    pair: &IndicatorPair,
) -> Matrix {
    let k = h.cols();
    let xth = x.tr_mul(h);
    let wt = w.transpose();
    let zptwt = z_prev.tr_mul(&wt);
    let mut a = Matrix::zeros(pair.total(), k);
    for (c, &r) in pair.view_rows().iter().enumerate() {
        let src = xth.row(c);
        let dst = a.row_mut(r);
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    for (c, &r) in pair.old_rows().iter().enumerate() {
        let src = zptwt.row(c);
        let dst = a.row_mut(r);
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    a
}

/// z-step: the row-orthonormal maximizer of tr(z a), i.e. the transpose of
/// the Procrustes solution for a.
pub fn update_z(a: &Matrix) -> Result<Matrix> {
    Ok(solve_trace_max(a)?.transpose())
}

/// b = z m2 z_prev^T (k x k), via gathering the old consensus columns.
pub fn build_w_coefficient(z: &Matrix, z_prev: &Matrix, pair: &IndicatorPair) -> Matrix {
    let k = z.rows();
    let mut b = Matrix::zeros(k, k);
    for (c, &r) in pair.old_rows().iter().enumerate() {
        for i in 0..k {
            let zi = z.get(i, r);
            let row = b.row_mut(i);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += zi * z_prev.get(j, c);
            }
        }
    }
    b
}

/// w-step: orthogonal maximizer of tr(w^T b).
pub fn update_w(b: &Matrix) -> Result<Matrix> {
    solve_trace_max(b)
}

/// c = x m1^T z^T (d x k), via gathering this view's consensus columns.
pub fn build_h_coefficient(x: &Matrix, z: &Matrix, pair: &IndicatorPair) -> Matrix {
    let k = z.rows();
    let gathered = Matrix::from_fn(x.cols(), k, |c, j| z.get(j, pair.view_rows()[c]));
    x.mul(&gathered)
}

/// h-step: column-orthonormal maximizer of tr(h^T c). Requires d >= k.
pub fn update_h(c: &Matrix) -> Result<Matrix> {
    solve_trace_max(c)
}

/// Plain objective 1/2 ||x - h z m1||_F^2 - tr((z m2)^T w z_prev): the
/// reconstruction error on the observed columns minus the alignment reward.
pub fn objective(
    x: &Matrix,
    h: &Matrix,
    z: &Matrix,
    pair: &IndicatorPair,
    w: &Matrix,
    z_prev: &Matrix,
) -> f64 {
    0.5 * reconstruction_sq(x, h, z, pair.view_rows()) - alignment(z, pair.old_rows(), w, z_prev)
}

/// Zero-padded objective 1/2 ||x m1^T - h z||_F^2 - tr((z m2)^T w z_prev).
/// This is the quantity the per-view iteration actually minimizes; it exceeds
/// [`objective`] by exactly half the consensus mass on columns the view does
/// not observe, so the two coincide on complete views.
pub fn objective_padded(
    x: &Matrix,
    h: &Matrix,
    z: &Matrix,
    pair: &IndicatorPair,
    w: &Matrix,
    z_prev: &Matrix,
) -> f64 {
    let mut observed_sq = 0.0;
    for &r in pair.view_rows() {
        for j in 0..z.rows() {
            let v = z.get(j, r);
            observed_sq += v * v;
        }
    }
    let padding = z.sumsq() - observed_sq;
    0.5 * (reconstruction_sq(x, h, z, pair.view_rows()) + padding)
        - alignment(z, pair.old_rows(), w, z_prev)
}

/// sum_c || x[:,c] - h z[:,view_rows[c]] ||^2
fn reconstruction_sq(x: &Matrix, h: &Matrix, z: &Matrix, view_rows: &[usize]) -> f64 {
    let k = z.rows();
    let d = x.rows();
    let mut acc = 0.0;
    for (c, &r) in view_rows.iter().enumerate() {
        for row in 0..d {
            let hrow = h.row(row);
            let mut pred = 0.0;
            for j in 0..k {
                pred += hrow[j] * z.get(j, r);
            }
            let diff = x.get(row, c) - pred;
            acc += diff * diff;
        }
    }
    acc
}

/// tr((z m2)^T w z_prev) = sum_c < z[:,old_rows[c]], (w z_prev)[:,c] >
fn alignment(z: &Matrix, old_rows: &[usize], w: &Matrix, z_prev: &Matrix) -> f64 {
    let k = z.rows();
    let wz = w.mul(z_prev);
    let mut acc = 0.0;
    for (c, &r) in old_rows.iter().enumerate() {
        for j in 0..k {
            acc += z.get(j, r) * wz.get(j, c);
        }
    }
    acc
}

/// Integrates the next view into the consensus. Pure transition: the input
/// state is untouched and remains usable.
pub fn integrate_view(
    state: &ConsensusState,
    batch: &ViewBatch,
    cfg: &SolverConfig,
) -> Result<ConsensusState> {
    integrate_view_inner(state, batch, cfg, None)
}

/// [`integrate_view`] that also returns z after every iteration. Test and
/// cross-check hook.
pub fn integrate_view_traced(
    state: &ConsensusState,
    batch: &ViewBatch,
    cfg: &SolverConfig,
) -> Result<(ConsensusState, Vec<Matrix>)> {
    let mut iterates = Vec::new();
    let next = integrate_view_inner(state, batch, cfg, Some(&mut iterates))?;
    Ok((next, iterates))
}

fn integrate_view_inner(
    state: &ConsensusState,
    batch: &ViewBatch,
    cfg: &SolverConfig,
    mut iterates: Option<&mut Vec<Matrix>>,
) -> Result<ConsensusState> {
    cfg.validate()?;
    if batch.view_index != state.views_seen + 1 {
        return Err(Error::Validation(format!(
            "stream order violated: state has seen {} views, batch is view {}",
            state.views_seen, batch.view_index
        )));
    }
    let k = state.k;
    if batch.dim() < k {
        return Err(Error::Config(format!(
            "view {} has dimension {}, fewer than k = {k}",
            batch.view_index,
            batch.dim()
        )));
    }
    let (registry, pair) = register_view(&state.registry, batch)?;
    let x = &batch.data;
    let z_prev = &state.z;
    let n_prev = z_prev.cols();
    let bound = lower_bound(n_prev, k);

    let mut h = Matrix::from_fn(x.rows(), k, |r, c| if r == c { 1.0 } else { 0.0 });
    let mut w = Matrix::identity(k);
    let mut z = Matrix::zeros(k, pair.total());
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for it in 0..cfg.max_iters {
        let a = build_z_coefficient(x, &h, &w, z_prev, &pair);
        z = update_z(&a)?;
        let b = build_w_coefficient(&z, z_prev, &pair);
        w = update_w(&b)?;
        let c = build_h_coefficient(x, &z, &pair);
        h = update_h(&c)?;

        if let Some(store) = iterates.as_deref_mut() {
            store.push(z.clone());
        }
        let obj = objective_padded(x, &h, &z, &pair, &w, z_prev);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "objective became non-finite at view {} iteration {}",
                batch.view_index,
                it + 1
            )));
        }
        trace.push(obj);
        if it >= 1 {
            let prev = trace[it - 1];
            let delta = (prev - obj).abs() / obj.abs().max(1e-12);
            if delta <= cfg.epsilon {
                converged = true;
                break;
            }
        }
    }

    let iters = trace.len();
    let diag = SolveDiagnostics { objective_trace: trace, iters, converged, lower_bound: bound };
    Ok(ConsensusState {
        z,
        registry,
        k,
        views_seen: state.views_seen + 1,
        last_diag: diag,
    })
}

/// A full pass over a view stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    pub state: ConsensusState,
    /// One entry per view, in arrival order (first entry is the init record).
    pub per_view: Vec<SolveDiagnostics>,
}

/// Runs init on the first view and integrates the rest. Batches must be
/// stamped with consecutive view indices starting at 1.
pub fn run_stream(views: &[ViewBatch], k: usize, cfg: &SolverConfig) -> Result<StreamOutcome> {
    let Some(first) = views.first() else {
        return Err(Error::Validation("empty view stream".into()));
    };
    let mut state = init_first_view(first, k, cfg)?;
    let mut per_view = vec![state.last_diag.clone()];
    for batch in &views[1..] {
        state = integrate_view(&state, batch, cfg)?;
        per_view.push(state.last_diag.clone());
    }
    Ok(StreamOutcome { state, per_view })
}

/// Consensus columns as unit-norm embedding vectors.
///
/// Sample coverage varies across the stream, which leaves column norms
/// uneven (rarely observed samples carry less mass); k-means on raw columns
/// would cluster by coverage. Columns are therefore L2-normalized; exactly
/// zero columns are kept at the origin.
pub fn consensus_embedding(state: &ConsensusState) -> Matrix {
    let z = &state.z;
    let k = z.rows();
    let mut emb = Matrix::zeros(k, z.cols());
    for c in 0..z.cols() {
        let mut norm_sq = 0.0;
        for r in 0..k {
            norm_sq += z.get(r, c) * z.get(r, c);
        }
        let norm = norm_sq.sqrt();
        if norm > 0.0 {
            for r in 0..k {
                emb.set(r, c, z.get(r, c) / norm);
            }
        }
    }
    emb
}

/// Labels every registered sample by k-means over the normalized consensus
/// columns: `restarts` seeded runs, keep the lowest within-cluster sum of
/// squares (first winner on ties). Label order follows the registry.
pub fn final_labels(state: &ConsensusState, restarts: usize, seed: u64) -> Result<Partition> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be >= 1".into()));
    }
    let emb = consensus_embedding(state);
    let mut best: Option<(Partition, f64)> = None;
    for r in 0..restarts {
        let (part, wcss) = kmeans_with_wcss(&emb, state.k, seed.wrapping_add(r as u64))?;
        if best.as_ref().is_none_or(|(_, bw)| wcss < *bw) {
            best = Some((part, wcss));
        }
    }
    Ok(best.expect("restarts >= 1").0)
}

/// One partition per restart, for protocols that average metrics over
/// k-means runs instead of keeping the best.
pub fn final_labels_all(state: &ConsensusState, restarts: usize, seed: u64) -> Result<Vec<Partition>> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be >= 1".into()));
    }
    let emb = consensus_embedding(state);
    (0..restarts)
        .map(|r| kmeans_with_wcss(&emb, state.k, seed.wrapping_add(r as u64)).map(|(p, _)| p))
        .collect()
}

/// Textbook re-implementation of the per-view iteration with dense 0/1
/// indicator matrices and plain matrix products. Far slower than the gather
/// path; exists so tests can confirm both routes produce the same iterates.
pub mod reference {
    use super::*;

    /// Dense-path twin of [`integrate_view_traced`]: returns the final z,
    /// every z iterate, and the recorded objective trace.
    pub fn integrate_view_dense(
        state: &ConsensusState,
        batch: &ViewBatch,
        cfg: &SolverConfig,
    ) -> Result<(Matrix, Vec<Matrix>, Vec<f64>)> {
        cfg.validate()?;
        if batch.view_index != state.views_seen() + 1 {
            return Err(Error::Validation("stream order violated".into()));
        }
        let k = state.k();
        if batch.dim() < k {
            return Err(Error::Config("view dimension below k".into()));
        }
        let (_, pair) = register_view(state.registry(), batch)?;
        let m1 = pair.view_dense();
        let m2 = pair.old_dense();
        let x = &batch.data;
        let z_prev = state.z();

        let mut h = Matrix::from_fn(x.rows(), k, |r, c| if r == c { 1.0 } else { 0.0 });
        let mut w = Matrix::identity(k);
        let mut z = Matrix::zeros(k, pair.total());
        let mut iterates = Vec::new();
        let mut trace: Vec<f64> = Vec::new();

        for it in 0..cfg.max_iters {
            // a = m1 (x^T h) + m2 (z_prev^T w^T), all dense.
            let a = m1.mul(&x.tr_mul(&h)).add(&m2.mul(&z_prev.tr_mul(&w.transpose())));
            z = solve_trace_max(&a)?.transpose();
            // b = z m2 z_prev^T
            let b = z.mul(&m2).mul(&z_prev.transpose());
            w = solve_trace_max(&b)?;
            // c = x m1^T z^T
            let c = x.mul(&m1.transpose()).mul(&z.transpose());
            h = solve_trace_max(&c)?;

            iterates.push(z.clone());
            // Padded objective, dense form: 1/2 ||x m1^T - h z||^2 - tr((z m2)^T w z_prev).
            let padded = x.mul(&m1.transpose());
            let hz = h.mul(&z);
            let mut recon = 0.0;
            for (pv, hv) in padded.data().iter().zip(hz.data()) {
                let dfl = pv - hv;
                recon += dfl * dfl;
            }
            let zm2 = z.mul(&m2);
            let wzp = w.mul(z_prev);
            let align: f64 = zm2.data().iter().zip(wzp.data()).map(|(a, b)| a * b).sum();
            let obj = 0.5 * recon - align;
            trace.push(obj);
            if it >= 1 {
                let prev = trace[it - 1];
                if (prev - obj).abs() / obj.abs().max(1e-12) <= cfg.epsilon {
                    break;
                }
            }
        }
        Ok((z, iterates, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::SampleId;

    fn ids(names: &[&str]) -> Vec<SampleId> {
        names.iter().map(|n| SampleId::new(*n).unwrap()).collect()
    }

    fn rng_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    /// Random row-orthonormal k x n via SVD of a Gaussian.
    fn random_row_orthonormal(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let g = rng_matrix(n, k, rng);
        thin_svd(&g).unwrap().u.transpose()
    }

    fn batch_with(view_index: usize, data: Matrix, names: &[&str]) -> ViewBatch {
        ViewBatch::new(view_index, data, ids(names)).unwrap()
    }

    /// Random stream: first view complete over n0 ids, later views drawn over
    /// random subsets plus fresh ids.
    fn random_stream(
        rng: &mut ChaCha8Rng,
        views: usize,
        n0: usize,
        dims: &[usize],
    ) -> Vec<ViewBatch> {
        let mut universe: Vec<String> = (0..n0).map(|i| format!("s{i:04}")).collect();
        let mut out = Vec::new();
        let d0 = dims[0];
        let data = rng_matrix(d0, n0, rng);
        let names: Vec<&str> = universe.iter().map(|s| s.as_str()).collect();
        out.push(batch_with(1, data, &names));
        for v in 1..views {
            // Random nonempty subset of known ids plus a few new ones.
            let mut chosen: Vec<String> = universe
                .iter()
                .filter(|_| rng.random_range(0..10) < 7)
                .cloned()
                .collect();
            if chosen.is_empty() {
                chosen.push(universe[0].clone());
            }
            let fresh = rng.random_range(0..3usize);
            for f in 0..fresh {
                let name = format!("v{v}n{f}");
                universe.push(name.clone());
                chosen.push(name);
            }
            let data = rng_matrix(dims[v.min(dims.len() - 1)], chosen.len(), rng);
            let names: Vec<&str> = chosen.iter().map(|s| s.as_str()).collect();
            out.push(batch_with(v + 1, data, &names));
        }
        out
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(lower_bound(0, 3), 0.0);
        // -sqrt(4) * 2^(3/2) = -2 * 2.8284271247461903
        assert!((lower_bound(4, 2) - (-5.656854249492381)).abs() < 1e-12);
    }

    #[test]
    fn init_takes_top_right_singular_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = rng_matrix(6, 10, &mut rng);
        let names: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let batch = batch_with(1, data.clone(), &name_refs);
        let state = init_first_view(&batch, 3, &SolverConfig::default()).unwrap();
        assert_eq!(state.z().rows(), 3);
        assert_eq!(state.z().cols(), 10);
        assert!(state.z().row_gram_defect() < 1e-10);
        let f = thin_svd(&data).unwrap();
        let top = Matrix::from_fn(3, 10, |r, c| f.vt.get(r, c));
        assert_eq!(state.z(), &top, "init must reuse the deterministic SVD rows");
        assert_eq!(state.views_seen(), 1);
        let diag = state.last_diagnostics();
        assert_eq!(diag.lower_bound, 0.0);
        assert!(diag.converged);
        assert_eq!(diag.objective_trace.len(), 1);
        assert!(diag.objective_trace[0] >= 0.0);
    }

    #[test]
    fn init_rejects_small_views_and_bad_index() {
        let cfg = SolverConfig::default();
        let b = batch_with(1, Matrix::zeros(2, 5), &["a", "b", "c", "d", "e"]);
        assert_eq!(init_first_view(&b, 3, &cfg).unwrap_err().kind(), "invalid-configuration");
        let b = batch_with(1, Matrix::zeros(5, 2), &["a", "b"]);
        assert_eq!(init_first_view(&b, 3, &cfg).unwrap_err().kind(), "invalid-configuration");
        let b = batch_with(2, Matrix::zeros(5, 5), &["a", "b", "c", "d", "e"]);
        assert_eq!(init_first_view(&b, 3, &cfg).unwrap_err().kind(), "validation");
    }

    #[test]
    fn random_init_is_orthonormal_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = rng_matrix(4, 8, &mut rng);
        let names: Vec<String> = (0..8).map(|i| format!("b{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let batch = batch_with(1, data, &name_refs);
        let cfg = SolverConfig {
            first_view_init: FirstViewInit::RandomOrthonormal,
            seed: 9,
            ..SolverConfig::default()
        };
        let s1 = init_first_view(&batch, 2, &cfg).unwrap();
        let s2 = init_first_view(&batch, 2, &cfg).unwrap();
        assert_eq!(s1.z(), s2.z(), "same seed, same init");
        assert!(s1.z().row_gram_defect() < 1e-10);
        let other = SolverConfig { seed: 10, ..cfg };
        let s3 = init_first_view(&batch, 2, &other).unwrap();
        assert!(s1.z().max_abs_diff(s3.z()) > 1e-3, "different seeds should differ");
    }

    #[test]
    fn update_z_on_orthonormal_coefficient_returns_its_transpose() {
        // a already has orthonormal columns, so the Procrustes solution is a
        // itself and z = a^T.
        let a = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let z = update_z(&a).unwrap();
        assert!(z.max_abs_diff(&a.transpose()) < 1e-14);
    }

    #[test]
    fn update_z_achieves_nuclear_norm_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = rng_matrix(6, 2, &mut rng);
            let z = update_z(&a).unwrap();
            let achieved: f64 = (0..2)
                .map(|j| (0..6).map(|r| z.get(j, r) * a.get(r, j)).sum::<f64>())
                .sum();
            let sigma_sum: f64 = thin_svd(&a).unwrap().sigma.iter().sum();
            assert!((achieved - sigma_sum).abs() < 1e-10);
            assert!(z.row_gram_defect() < 1e-10);
        }
    }

    #[test]
    fn update_z_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = rng_matrix(8, 3, &mut rng);
        let z_star = update_z(&a).unwrap();
        let trace = |z: &Matrix| -> f64 {
            (0..3).map(|j| (0..8).map(|r| z.get(j, r) * a.get(r, j)).sum::<f64>()).sum()
        };
        let best = trace(&z_star);
        for _ in 0..200 {
            let z = random_row_orthonormal(3, 8, &mut rng);
            assert!(trace(&z) <= best + 1e-9, "random feasible point beat the update");
        }
    }

    #[test]
    fn update_w_is_identity_when_consensus_already_aligned() {
        // Complete-view case: z restricted to old columns equals z_prev, so
        // b = z_prev z_prev^T = I and w = I.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z_prev = random_row_orthonormal(2, 5, &mut rng);
        let (reg, _) = register_view(
            &SampleRegistry::new(),
            &batch_with(1, Matrix::zeros(2, 5), &["a", "b", "c", "d", "e"]),
        )
        .unwrap();
        let (_, pair) = register_view(
            &reg,
            &batch_with(2, Matrix::zeros(2, 5), &["a", "b", "c", "d", "e"]),
        )
        .unwrap();
        let b = build_w_coefficient(&z_prev, &z_prev, &pair);
        assert!(b.max_abs_diff(&Matrix::identity(2)) < 1e-12);
        let w = update_w(&b).unwrap();
        assert!(w.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn update_h_is_orthonormal_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let c = rng_matrix(7, 3, &mut rng);
        let h = update_h(&c).unwrap();
        assert!(h.col_gram_defect() < 1e-10);
        let achieved: f64 = h.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
        let sigma_sum: f64 = thin_svd(&c).unwrap().sigma.iter().sum();
        assert!((achieved - sigma_sum).abs() < 1e-10);
    }

    /// Worked objective example: one old sample, exact reconstruction,
    /// perfect alignment. x = h (2x1) times z = [1], w = [1], z_prev = [1]:
    /// reconstruction 0, alignment 1, objective -1.
    #[test]
    fn objective_of_exact_fit_is_minus_one() {
        let (reg, _) =
            register_view(&SampleRegistry::new(), &batch_with(1, Matrix::zeros(1, 1), &["a"])).unwrap();
        let view = batch_with(2, Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap(), &["a"]);
        let (_, pair) = register_view(&reg, &view).unwrap();
        let h = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let z = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let w = Matrix::identity(1);
        let z_prev = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let obj = objective(&view.data, &h, &z, &pair, &w, &z_prev);
        assert_eq!(obj, -1.0);
        // Complete view: padded form must agree.
        let padded = objective_padded(&view.data, &h, &z, &pair, &w, &z_prev);
        assert_eq!(padded, -1.0);
    }

    /// Worked objective example with disjoint supports: the view only covers
    /// a brand-new sample whose features and consensus column are zero, and
    /// the consensus mass on old samples is orthogonal to the aligned
    /// previous consensus. Everything cancels: objective 0.
    #[test]
    fn objective_of_disjoint_supports_is_zero() {
        let (reg, _) = register_view(
            &SampleRegistry::new(),
            &batch_with(1, Matrix::zeros(1, 2), &["o1", "o2"]),
        )
        .unwrap();
        let view = batch_with(2, Matrix::from_vec(1, 1, vec![0.0]).unwrap(), &["n1"]);
        let (_, pair) = register_view(&reg, &view).unwrap();
        assert_eq!(pair.view_rows(), &[2]);
        assert_eq!(pair.old_rows(), &[0, 1]);
        let z = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let z_prev = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let h = Matrix::identity(1);
        let w = Matrix::identity(1);
        assert_eq!(objective(&view.data, &h, &z, &pair, &w, &z_prev), 0.0);
    }

    #[test]
    fn integrate_enforces_stream_order_and_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let stream = random_stream(&mut rng, 2, 8, &[4, 4]);
        let cfg = SolverConfig::default();
        let state = init_first_view(&stream[0], 2, &cfg).unwrap();
        let wrong = stream[1].clone().with_view_index(5).unwrap();
        assert_eq!(integrate_view(&state, &wrong, &cfg).unwrap_err().kind(), "validation");
        let thin = ViewBatch::new(2, Matrix::zeros(1, 3), ids(&["a", "b", "x"])).unwrap();
        assert_eq!(integrate_view(&state, &thin, &cfg).unwrap_err().kind(), "invalid-configuration");
    }

    #[test]
    fn integrate_preserves_orthonormality_and_monotone_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..25 {
            let dims = [3 + trial % 3, 4, 5];
            let stream = random_stream(&mut rng, 3, 10 + trial % 7, &dims);
            let cfg = SolverConfig::default();
            let outcome = run_stream(&stream, 2, &cfg).unwrap();
            assert_eq!(outcome.state.views_seen(), 3);
            assert!(outcome.state.z().row_gram_defect() < 1e-8, "trial {trial}: defect");
            for diag in &outcome.per_view[1..] {
                for pair in diag.objective_trace.windows(2) {
                    assert!(
                        pair[1] <= pair[0] + 1e-8,
                        "trial {trial}: objective rose {} -> {}",
                        pair[0],
                        pair[1]
                    );
                }
                let last = *diag.objective_trace.last().unwrap();
                assert!(last >= diag.lower_bound - 1e-8, "trial {trial}: below floor");
                assert_eq!(diag.iters, diag.objective_trace.len());
            }
        }
    }

    #[test]
    fn integrate_leaves_input_state_usable() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let stream = random_stream(&mut rng, 3, 9, &[4, 4, 4]);
        let cfg = SolverConfig::default();
        let s1 = init_first_view(&stream[0], 2, &cfg).unwrap();
        let before = s1.clone();
        let s2a = integrate_view(&s1, &stream[1], &cfg).unwrap();
        assert_eq!(s1, before, "integration must not mutate its input");
        let s2b = integrate_view(&s1, &stream[1], &cfg).unwrap();
        assert_eq!(s2a, s2b, "same input, same transition");
        assert_eq!(s2a.z().data(), s2b.z().data(), "bitwise identical transition");
    }

    #[test]
    fn gather_and_dense_coefficients_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let stream = random_stream(&mut rng, 2, 8, &[4, 5]);
            let cfg = SolverConfig::default();
            let state = init_first_view(&stream[0], 3, &cfg).unwrap();
            let (reg_after, pair) = register_view(state.registry(), &stream[1]).unwrap();
            assert_eq!(reg_after.len(), pair.total());
            let x = &stream[1].data;
            let h = Matrix::from_fn(x.rows(), 3, |r, c| if r == c { 1.0 } else { 0.0 });
            let w = random_row_orthonormal(3, 3, &mut rng);
            let a = build_z_coefficient(x, &h, &w, state.z(), &pair);
            let dense_a = pair
                .view_dense()
                .mul(&x.tr_mul(&h))
                .add(&pair.old_dense().mul(&state.z().tr_mul(&w.transpose())));
            assert!(a.max_abs_diff(&dense_a) < 1e-12);
            let z = random_row_orthonormal(3, pair.total(), &mut rng);
            let b = build_w_coefficient(&z, state.z(), &pair);
            let dense_b = z.mul(&pair.old_dense()).mul(&state.z().transpose());
            assert!(b.max_abs_diff(&dense_b) < 1e-12);
            let c = build_h_coefficient(x, &z, &pair);
            let dense_c = x.mul(&pair.view_dense().transpose()).mul(&z.transpose());
            assert!(c.max_abs_diff(&dense_c) < 1e-12);
        }
    }

    #[test]
    fn padded_objective_exceeds_plain_by_unobserved_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let stream = random_stream(&mut rng, 2, 8, &[4, 4]);
        let cfg = SolverConfig::default();
        let state = init_first_view(&stream[0], 2, &cfg).unwrap();
        let (_, pair) = register_view(state.registry(), &stream[1]).unwrap();
        let x = &stream[1].data;
        let h = update_h(&rng_matrix(x.rows(), 2, &mut rng)).unwrap();
        let w = update_w(&rng_matrix(2, 2, &mut rng)).unwrap();
        let z = random_row_orthonormal(2, pair.total(), &mut rng);
        let plain = objective(x, &h, &z, &pair, &w, state.z());
        let padded = objective_padded(x, &h, &z, &pair, &w, state.z());
        let mut unobserved = 0.0;
        let observed: std::collections::HashSet<usize> = pair.view_rows().iter().copied().collect();
        for cidx in 0..pair.total() {
            if !observed.contains(&cidx) {
                for r in 0..2 {
                    unobserved += z.get(r, cidx) * z.get(r, cidx);
                }
            }
        }
        assert!((padded - plain - 0.5 * unobserved).abs() < 1e-10);
    }

    #[test]
    fn run_stream_matches_manual_folding() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let stream = random_stream(&mut rng, 3, 8, &[4, 4, 4]);
        let cfg = SolverConfig::default();
        let outcome = run_stream(&stream, 2, &cfg).unwrap();
        let mut state = init_first_view(&stream[0], 2, &cfg).unwrap();
        for b in &stream[1..] {
            state = integrate_view(&state, b, &cfg).unwrap();
        }
        assert_eq!(outcome.state, state);
        assert_eq!(outcome.per_view.len(), 3);
    }

    #[test]
    fn final_labels_are_deterministic_and_cover_registry() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let stream = random_stream(&mut rng, 3, 12, &[4, 4, 4]);
        let cfg = SolverConfig::default();
        let outcome = run_stream(&stream, 3, &cfg).unwrap();
        let p1 = final_labels(&outcome.state, 5, 7).unwrap();
        let p2 = final_labels(&outcome.state, 5, 7).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.len(), outcome.state.registry().len());
        assert_eq!(p1.k(), 3);
        let all = final_labels_all(&outcome.state, 5, 7).unwrap();
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn embedding_columns_are_unit_or_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let stream = random_stream(&mut rng, 3, 10, &[4, 4, 4]);
        let outcome = run_stream(&stream, 2, &SolverConfig::default()).unwrap();
        let emb = consensus_embedding(&outcome.state);
        for c in 0..emb.cols() {
            let norm_sq: f64 = (0..emb.rows()).map(|r| emb.get(r, c) * emb.get(r, c)).sum();
            assert!(
                norm_sq == 0.0 || (norm_sq - 1.0).abs() < 1e-10,
                "column {c} has norm^2 {norm_sq}"
            );
        }
    }
}
