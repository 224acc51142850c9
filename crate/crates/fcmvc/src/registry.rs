//! Sample identity bookkeeping across views.
//!
//! Every sample carries an opaque string id. The registry records the order
//! in which ids were first seen; that order defines the column layout of the
//! consensus matrix. Alignment between a view and the registry is expressed
//! by two index maps (column -> registry position), which stand in for the
//! 0/1 indicator matrices of the underlying formulation without ever
//! materializing them.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Opaque, non-empty sample identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleId(String);

impl SampleId {
    pub fn new(id: impl Into<String>) -> Result<SampleId> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("sample id must be non-empty".into()));
        }
        Ok(SampleId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One incoming view: a d_t x n_t feature block plus the id of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    /// 1-based position of this view in the stream.
    pub view_index: usize,
    /// Features, one column per sample.
    pub data: Matrix,
    /// Column ids; ids[c] labels data column c. Pairwise distinct.
    pub ids: Vec<SampleId>,
}

impl ViewBatch {
    pub fn new(view_index: usize, data: Matrix, ids: Vec<SampleId>) -> Result<ViewBatch> {
        if view_index == 0 {
            return Err(Error::Validation("view_index is 1-based; got 0".into()));
        }
        if ids.len() != data.cols() {
            return Err(Error::Validation(format!(
                "view {view_index}: {} ids for {} data columns",
                ids.len(),
                data.cols()
            )));
        }
        if ids.is_empty() {
            return Err(Error::Validation(format!("view {view_index} has no samples")));
        }
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(ids.len());
        for (c, id) in ids.iter().enumerate() {
            if let Some(first) = seen.insert(id.as_str(), c) {
                return Err(Error::Validation(format!(
                    "view {view_index}: id '{id}' appears at columns {first} and {c}"
                )));
            }
        }
        Ok(ViewBatch { view_index, data, ids })
    }

    /// Number of samples in this view.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature dimension of this view.
    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    /// Same batch re-stamped with a new stream position. Used when views are
    /// replayed in a permuted order.
    pub fn with_view_index(mut self, view_index: usize) -> Result<ViewBatch> {
        if view_index == 0 {
            return Err(Error::Validation("view_index is 1-based; got 0".into()));
        }
        self.view_index = view_index;
        Ok(self)
    }
}

/// Append-only record of every sample id ever seen, in first-seen order.
///
/// A registry value is an immutable snapshot; [`register_view`] returns a new
/// registry rather than mutating in place, so solver states taken before and
/// after a view arrival can coexist.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleRegistry {
    ordered: Vec<SampleId>,
    index: HashMap<SampleId, usize>,
}

impl SampleRegistry {
    pub fn new() -> SampleRegistry {
        SampleRegistry::default()
    }

    /// Builds a registry from a full id list (checkpoint restore path).
    pub fn from_ids(ids: Vec<SampleId>) -> Result<SampleRegistry> {
        let mut reg = SampleRegistry::new();
        for id in ids {
            if reg.index.contains_key(&id) {
                return Err(Error::Validation(format!("duplicate id '{id}' in registry list")));
            }
            reg.index.insert(id.clone(), reg.ordered.len());
            reg.ordered.push(id);
        }
        Ok(reg)
    }

    /// Number of registered samples (n_a in the formulation).
    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    /// Registry position of an id, if known.
    pub fn position(&self, id: &SampleId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Ids in first-seen order.
    pub fn ids(&self) -> &[SampleId] {
        &self.ordered
    }
}

/// Alignment of one view against the registry state it arrived into.
///
/// `view_rows[c]` is the registry position of view column c (the single 1 in
/// column c of the first indicator); `old_rows[c]` is the registry position
/// of column c of the previous consensus (the single 1 in column c of the
/// second indicator, which is just the identity embedding of the old sample
/// block into the grown one).
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPair {
    view_rows: Vec<usize>,
    old_rows: Vec<usize>,
    total: usize,
}

impl IndicatorPair {
    /// Registry positions of the view's columns, in column order.
    pub fn view_rows(&self) -> &[usize] {
        &self.view_rows
    }

    /// Registry positions of the previous consensus columns, in column order.
    pub fn old_rows(&self) -> &[usize] {
        &self.old_rows
    }

    /// Total registered samples after this view (row count of both maps).
    pub fn total(&self) -> usize {
        self.total
    }

    /// Dense n_total x n_view 0/1 matrix for the view alignment. Reference
    /// path only; the solver works with the index form.
    pub fn view_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.total, self.view_rows.len());
        for (c, &r) in self.view_rows.iter().enumerate() {
            m.set(r, c, 1.0);
        }
        m
    }

    /// Dense n_total x n_old 0/1 matrix embedding the previous sample block.
    pub fn old_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.total, self.old_rows.len());
        for (c, &r) in self.old_rows.iter().enumerate() {
            m.set(r, c, 1.0);
        }
        m
    }
}

/// Registers a view against the current registry snapshot.
///
/// New ids are appended in view column order; known ids map to their existing
/// positions. Returns the grown registry plus the alignment of this view and
/// of the pre-existing sample block.
pub fn register_view(
    registry: &SampleRegistry,
    batch: &ViewBatch,
) -> Result<(SampleRegistry, IndicatorPair)> {
    let old_len = registry.len();
    let mut grown = registry.clone();
    let mut view_rows = Vec::with_capacity(batch.len());
    for id in &batch.ids {
        let pos = match grown.index.get(id) {
            Some(&p) => p,
            None => {
                let p = grown.ordered.len();
                grown.index.insert(id.clone(), p);
                grown.ordered.push(id.clone());
                p
            }
        };
        view_rows.push(pos);
    }
    let total = grown.len();
    let pair = IndicatorPair {
        view_rows,
        old_rows: (0..old_len).collect(),
        total,
    };
    Ok((grown, pair))
}

/// Report of samples that would never be observed by any view in a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Ids present in the union registry but in no view. Empty means the
    /// stream satisfies the full-coverage assumption.
    pub missing: Vec<SampleId>,
    /// Union sample count.
    pub total: usize,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Checks that every id in `universe` appears in at least one view.
///
/// `universe` is the intended full sample collection (for synthetic runs, the
/// generator's id list). Ids seen in views but absent from the universe are a
/// validation error, since the universe is supposed to be the union.
pub fn coverage_check(universe: &[SampleId], views: &[ViewBatch]) -> Result<CoverageReport> {
    let mut seen: HashMap<&SampleId, bool> = universe.iter().map(|id| (id, false)).collect();
    if seen.len() != universe.len() {
        return Err(Error::Validation("duplicate id in universe".into()));
    }
    for view in views {
        for id in &view.ids {
            match seen.get_mut(id) {
                Some(flag) => *flag = true,
                None => {
                    return Err(Error::Validation(format!(
                        "view {} contains id '{id}' outside the declared universe",
                        view.view_index
                    )))
                }
            }
        }
    }
    let missing: Vec<SampleId> = universe
        .iter()
        .filter(|id| !seen[*id])
        .cloned()
        .collect();
    Ok(CoverageReport { missing, total: universe.len() })
}
