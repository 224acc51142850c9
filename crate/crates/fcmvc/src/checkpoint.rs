//! Versioned snapshot of the solver state.
//!
//! A checkpoint captures everything needed to continue a stream: k, the
//! registry id order, the consensus entries (row-major), how many views have
//! been folded in, and the last objective trace. Restoring never rewrites
//! the consensus entries, so a run that goes through a serialize/deserialize
//! cycle continues bit-for-bit like one that never stopped. JSON is the
//! intended wire format; serde's f64 round-trip keeps the bits exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::registry::{SampleId, SampleRegistry};
use crate::solver::{ConsensusState, SolveDiagnostics};

/// Current checkpoint layout version. Bump on any schema change.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable solver snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub k: usize,
    pub views_seen: usize,
    /// Registry ids in first-seen order; one per consensus column.
    pub sample_ids: Vec<String>,
    pub z_rows: usize,
    pub z_cols: usize,
    /// Consensus entries, row-major, z_rows * z_cols values.
    pub z: Vec<f64>,
    /// Objective trace of the most recent integration.
    pub objective_trace: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    pub lower_bound: f64,
}

impl Checkpoint {
    pub fn from_state(state: &ConsensusState) -> Checkpoint {
        let diag = state.last_diagnostics();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            k: state.k(),
            views_seen: state.views_seen(),
            sample_ids: state.registry().ids().iter().map(|id| id.as_str().to_string()).collect(),
            z_rows: state.z().rows(),
            z_cols: state.z().cols(),
            z: state.z().data().to_vec(),
            objective_trace: diag.objective_trace.clone(),
            iters: diag.iters,
            converged: diag.converged,
            lower_bound: diag.lower_bound,
        }
    }

    /// Validates the document and rebuilds the solver state. Rejects unknown
    /// versions, shape mismatches, duplicate or empty ids, non-finite
    /// entries, and consensus rows that are not orthonormal.
    pub fn into_state(self) -> Result<ConsensusState> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        if self.z_rows != self.k {
            return Err(Error::Validation(format!(
                "checkpoint stores {} consensus rows for k = {}",
                self.z_rows, self.k
            )));
        }
        if self.sample_ids.len() != self.z_cols {
            return Err(Error::Validation(format!(
                "checkpoint stores {} ids for {} consensus columns",
                self.sample_ids.len(),
                self.z_cols
            )));
        }
        if self.iters != self.objective_trace.len() {
            return Err(Error::Validation(format!(
                "checkpoint iteration count {} disagrees with trace length {}",
                self.iters,
                self.objective_trace.len()
            )));
        }
        if self.objective_trace.iter().any(|v| !v.is_finite()) || !self.lower_bound.is_finite() {
            return Err(Error::Validation("non-finite value in checkpoint trace".into()));
        }
        let ids = self
            .sample_ids
            .into_iter()
            .map(SampleId::new)
            .collect::<Result<Vec<_>>>()?;
        let registry = SampleRegistry::from_ids(ids)?;
        let z = Matrix::from_vec(self.z_rows, self.z_cols, self.z)?;
        let diag = SolveDiagnostics {
            objective_trace: self.objective_trace,
            iters: self.iters,
            converged: self.converged,
            lower_bound: self.lower_bound,
        };
        ConsensusState::from_parts(z, registry, self.k, self.views_seen, diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Matrix;
    use crate::registry::ViewBatch;
    use crate::solver::{init_first_view, integrate_view, SolverConfig};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn small_state() -> ConsensusState {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let data = Matrix::from_fn(4, 7, |_, _| rng.sample(StandardNormal));
        let ids: Vec<SampleId> = (0..7).map(|i| SampleId::new(format!("s{i}")).unwrap()).collect();
        let batch = ViewBatch::new(1, data, ids).unwrap();
        let state = init_first_view(&batch, 2, &SolverConfig::default()).unwrap();
        let data2 = Matrix::from_fn(5, 4, |_, _| rng.sample(StandardNormal));
        let ids2: Vec<SampleId> = ["s1", "s3", "s5", "x0"]
            .iter()
            .map(|s| SampleId::new(*s).unwrap())
            .collect();
        let batch2 = ViewBatch::new(2, data2, ids2).unwrap();
        integrate_view(&state, &batch2, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let state = small_state();
        let ck = Checkpoint::from_state(&state);
        let json = serde_json::to_string(&ck).unwrap();
        let parsed: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, ck, "document must survive the wire unchanged");
        let restored = parsed.into_state().unwrap();
        assert_eq!(restored.z().data(), state.z().data(), "consensus bits must survive");
        assert_eq!(restored.registry(), state.registry());
        assert_eq!(restored.views_seen(), state.views_seen());
        assert_eq!(restored.last_diagnostics(), state.last_diagnostics());
    }

    #[test]
    fn rejects_future_version() {
        let state = small_state();
        let mut ck = Checkpoint::from_state(&state);
        ck.format_version = CHECKPOINT_VERSION + 1;
        assert_eq!(ck.into_state().unwrap_err().kind(), "validation");
    }

    #[test]
    fn rejects_tampered_shapes_and_entries() {
        let state = small_state();

        let mut ck = Checkpoint::from_state(&state);
        ck.z_cols += 1;
        assert_eq!(ck.into_state().unwrap_err().kind(), "validation");

        let mut ck = Checkpoint::from_state(&state);
        ck.sample_ids[0] = ck.sample_ids[1].clone();
        assert_eq!(ck.into_state().unwrap_err().kind(), "validation");

        let mut ck = Checkpoint::from_state(&state);
        ck.z[3] = 1e6;
        // Shape is fine but rows are no longer orthonormal.
        assert_eq!(ck.into_state().unwrap_err().kind(), "validation");

        let mut ck = Checkpoint::from_state(&state);
        ck.iters += 1;
        assert_eq!(ck.into_state().unwrap_err().kind(), "validation");
    }

    #[test]
    fn resume_continues_bit_identically() {
        // Fold three views directly, or checkpoint after view 2 and resume.
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let data3 = Matrix::from_fn(4, 5, |_, _| rng.sample(StandardNormal));
        let ids3: Vec<SampleId> = ["s0", "s2", "s6", "x0", "y0"]
            .iter()
            .map(|s| SampleId::new(*s).unwrap())
            .collect();
        let batch3 = ViewBatch::new(3, data3, ids3).unwrap();
        let cfg = SolverConfig::default();

        let direct = integrate_view(&small_state(), &batch3, &cfg).unwrap();

        let json = serde_json::to_string(&Checkpoint::from_state(&small_state())).unwrap();
        let resumed_state: Checkpoint = serde_json::from_str(&json).unwrap();
        let resumed = integrate_view(&resumed_state.into_state().unwrap(), &batch3, &cfg).unwrap();

        assert_eq!(direct.z().data(), resumed.z().data(), "resume must be bit-identical");
        assert_eq!(direct.last_diagnostics(), resumed.last_diagnostics());
    }
}
