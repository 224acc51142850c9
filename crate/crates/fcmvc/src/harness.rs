//! Experiment harness: synthetic multi-view data, the incomplete-view
//! protocol, completion baselines, and the sweeps behind the bench command.
//!
//! Missing-data protocol: given m complete aligned views and a ratio r in
//! [0, 0.5], each of the first m-1 views drops floor(n*r) samples uniformly
//! at random; the last view drops floor(n*r) samples drawn only from those
//! kept by at least one earlier view. Every sample therefore survives in at
//! least one view. A single view admits only r = 0.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{evaluate, MetricReport, Partition};
use crate::mat::Matrix;
use crate::registry::{coverage_check, SampleId, SampleRegistry, ViewBatch};
use crate::solver::{
    final_labels_all, init_first_view, integrate_view, run_stream, ConsensusState, SolverConfig,
    StreamOutcome,
};

/// Recipe for planted-cluster multi-view data.
///
/// Per view, k centers are drawn from N(0, separation^2 I) and redrawn (up
/// to 1000 times) until all pairwise center distances reach `separation`;
/// samples then get unit isotropic noise around their cluster center, so
/// `separation` is expressed in noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    pub views: usize,
    /// Feature dimension of each view; length must equal `views`.
    pub dims: Vec<usize>,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("synthetic spec needs k >= 1".into()));
        }
        if self.n < 2 * self.k {
            return Err(Error::Config(format!(
                "synthetic spec needs n >= 2k, got n = {} with k = {}",
                self.n, self.k
            )));
        }
        if self.views == 0 {
            return Err(Error::Config("synthetic spec needs at least one view".into()));
        }
        if self.dims.len() != self.views {
            return Err(Error::Config(format!(
                "{} dims given for {} views",
                self.dims.len(),
                self.views
            )));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < self.k) {
            return Err(Error::Config(format!(
                "view dimension {d} below k = {}; the view basis would be rank-deficient",
                self.k
            )));
        }
        if !(self.separation > 0.0) || !self.separation.is_finite() {
            return Err(Error::Config("separation must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Complete generated dataset: one batch per view, all covering `ids` in the
/// same order, plus the planted truth partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub views: Vec<ViewBatch>,
    pub truth: Partition,
    pub ids: Vec<SampleId>,
}

fn place_centers(k: usize, d: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    for _ in 0..1000 {
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        'pairs: for i in 0..k {
            for j in (i + 1)..k {
                let dist_sq: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist_sq < separation * separation {
                    ok = false;
                    break 'pairs;
                }
            }
        }
        if ok {
            return Ok(centers);
        }
    }
    Err(Error::Generation(format!(
        "could not place {k} centers at separation {separation} in {d} dimensions after 1000 draws"
    )))
}

/// Deterministic planted-cluster generator. Labels are balanced (sizes differ
/// by at most one) and shuffled; the same spec always yields the same data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.k).collect();
    labels.shuffle(&mut rng);
    let ids: Vec<SampleId> = (0..spec.n)
        .map(|i| SampleId::new(format!("s{i:06}")).expect("generated ids are non-empty"))
        .collect();

    let mut views = Vec::with_capacity(spec.views);
    for (t, &d) in spec.dims.iter().enumerate() {
        let centers = place_centers(spec.k, d, spec.separation, &mut rng)?;
        let mut data = Matrix::zeros(d, spec.n);
        for c in 0..spec.n {
            let center = &centers[labels[c]];
            for r in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                data.set(r, c, center[r] + noise);
            }
        }
        views.push(ViewBatch::new(t + 1, data, ids.clone())?);
    }
    let truth = Partition::new(labels, spec.k)?;
    Ok(SyntheticData { views, truth, ids })
}

/// Which samples each view kept and dropped, for reproduction and audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingPattern {
    pub ratio: f64,
    pub seed: u64,
    pub views: Vec<PatternView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternView {
    pub view_index: usize,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
}

/// Applies the missing-data protocol to complete aligned views.
///
/// All input views must cover the same id set. Column order within each view
/// is preserved for the kept samples. Deterministic per seed.
pub fn apply_missing(
    views: &[ViewBatch],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<ViewBatch>, MissingPattern)> {
    if views.is_empty() {
        return Err(Error::Validation("no views to corrupt".into()));
    }
    if !(0.0..=0.5).contains(&ratio) || !ratio.is_finite() {
        return Err(Error::Config(format!(
            "missing ratio must lie in [0, 0.5], got {ratio}"
        )));
    }
    let n = views[0].len();
    let reference: HashSet<&SampleId> = views[0].ids.iter().collect();
    for v in views {
        if v.len() != n || v.ids.iter().any(|id| !reference.contains(id)) {
            return Err(Error::Validation(format!(
                "view {} does not cover the same id set as view {}",
                v.view_index, views[0].view_index
            )));
        }
    }
    let m = views.len();
    let drop = (n as f64 * ratio).floor() as usize;
    if m == 1 && drop > 0 {
        return Err(Error::Protocol(
            "a single view cannot drop samples without losing coverage".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped_per_view: Vec<HashSet<usize>> = Vec::with_capacity(m);
    // Earlier views: uniform drops.
    for _ in 0..m.saturating_sub(1) {
        let picks = rand::seq::index::sample(&mut rng, n, drop);
        dropped_per_view.push(picks.into_iter().collect());
    }
    // Last view: drops restricted to samples kept somewhere earlier.
    if m >= 2 {
        let last_view_ids = &views[m - 1].ids;
        let eligible: Vec<usize> = (0..n)
            .filter(|&c| {
                let id = &last_view_ids[c];
                views[..m - 1].iter().zip(&dropped_per_view).any(|(v, dropped)| {
                    // Position of this id in view v's column order.
                    v.ids.iter().position(|x| x == id).is_some_and(|p| !dropped.contains(&p))
                })
            })
            .collect();
        if eligible.len() < drop {
            return Err(Error::Protocol(format!(
                "cannot drop {drop} samples from the last view; only {} are covered elsewhere",
                eligible.len()
            )));
        }
        let picks = rand::seq::index::sample(&mut rng, eligible.len(), drop);
        dropped_per_view.push(picks.into_iter().map(|i| eligible[i]).collect());
    } else {
        dropped_per_view.push(HashSet::new());
    }

    let mut out_views = Vec::with_capacity(m);
    let mut pattern_views = Vec::with_capacity(m);
    for (v, dropped) in views.iter().zip(&dropped_per_view) {
        let kept_cols: Vec<usize> = (0..n).filter(|c| !dropped.contains(c)).collect();
        let data = Matrix::from_fn(v.dim(), kept_cols.len(), |r, c| v.data.get(r, kept_cols[c]));
        let ids: Vec<SampleId> = kept_cols.iter().map(|&c| v.ids[c].clone()).collect();
        let mut dropped_ids: Vec<String> = dropped.iter().map(|&c| v.ids[c].as_str().to_string()).collect();
        dropped_ids.sort();
        pattern_views.push(PatternView {
            view_index: v.view_index,
            kept: ids.iter().map(|id| id.as_str().to_string()).collect(),
            dropped: dropped_ids,
        });
        out_views.push(ViewBatch::new(v.view_index, data, ids)?);
    }

    // The construction guarantees coverage; verify anyway so a future edit
    // cannot silently break the protocol.
    let universe: Vec<SampleId> = views[0].ids.clone();
    let report = coverage_check(&universe, &out_views)?;
    if !report.is_complete() {
        return Err(Error::Protocol(format!(
            "{} samples lost all views; protocol bug",
            report.missing.len()
        )));
    }

    Ok((out_views, MissingPattern { ratio, seed, views: pattern_views }))
}

/// How completion baselines fill the columns a view is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillMode {
    /// Missing columns become zero vectors.
    Zero,
    /// Missing columns take the view's per-feature mean over observed
    /// columns.
    Average,
}

/// Ids across views in first-appearance order (the registry order a stream
/// of these views would produce).
pub fn union_ids(views: &[ViewBatch]) -> Vec<SampleId> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in views {
        for id in &v.ids {
            if seen.insert(id.clone()) {
                out.push(id.clone());
            }
        }
    }
    out
}

/// Pads every view to the full id union with `mode` columns and re-stamps
/// view indices 1..m in order: the complete stream the fill baselines run on.
pub fn complete_views(views: &[ViewBatch], mode: FillMode) -> Result<Vec<ViewBatch>> {
    if views.is_empty() {
        return Err(Error::Validation("no views to complete".into()));
    }
    let universe = union_ids(views);
    let mut completed = Vec::with_capacity(views.len());
    for (pos, v) in views.iter().enumerate() {
        let d = v.dim();
        let fill: Vec<f64> = match mode {
            FillMode::Zero => vec![0.0; d],
            FillMode::Average => {
                let inv = 1.0 / v.len() as f64;
                (0..d)
                    .map(|r| (0..v.len()).map(|c| v.data.get(r, c)).sum::<f64>() * inv)
                    .collect()
            }
        };
        let col_of: HashMap<&SampleId, usize> =
            v.ids.iter().enumerate().map(|(c, id)| (id, c)).collect();
        let data = Matrix::from_fn(d, universe.len(), |r, u| match col_of.get(&universe[u]) {
            Some(&c) => v.data.get(r, c),
            None => fill[r],
        });
        completed.push(ViewBatch::new(pos + 1, data, universe.clone())?);
    }
    Ok(completed)
}

/// Completion baseline: pads every view to the full id union with `mode`
/// columns, then runs the standard solver on the now-complete stream.
pub fn run_fill_baseline(
    views: &[ViewBatch],
    mode: FillMode,
    k: usize,
    cfg: &SolverConfig,
) -> Result<StreamOutcome> {
    run_stream(&complete_views(views, mode)?, k, cfg)
}

/// Reorders a truth partition from generator id order into registry order.
pub fn align_truth(
    truth_ids: &[SampleId],
    truth: &Partition,
    registry: &SampleRegistry,
) -> Result<Partition> {
    if truth_ids.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} truth ids for {} labels",
            truth_ids.len(),
            truth.len()
        )));
    }
    if registry.len() != truth.len() {
        return Err(Error::Validation(format!(
            "registry has {} samples, truth has {}",
            registry.len(),
            truth.len()
        )));
    }
    let label_of: HashMap<&SampleId, usize> = truth_ids
        .iter()
        .zip(truth.labels())
        .map(|(id, &l)| (id, l))
        .collect();
    let labels = registry
        .ids()
        .iter()
        .map(|id| {
            label_of.get(id).copied().ok_or_else(|| {
                Error::Validation(format!("registry id '{id}' missing from truth"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    Partition::new(labels, truth.k())
}

/// Metric protocol: run k-means `restarts` times on the consensus embedding
/// and report the metric averages across runs.
pub fn protocol_metrics(
    state: &ConsensusState,
    truth_aligned: &Partition,
    restarts: usize,
    seed: u64,
) -> Result<MetricReport> {
    let parts = final_labels_all(state, restarts, seed)?;
    let mut sum = MetricReport { acc: 0.0, nmi: 0.0, purity: 0.0, fscore: 0.0 };
    for p in &parts {
        let r = evaluate(truth_aligned, p)?;
        sum.acc += r.acc;
        sum.nmi += r.nmi;
        sum.purity += r.purity;
        sum.fscore += r.fscore;
    }
    let inv = 1.0 / parts.len() as f64;
    Ok(MetricReport {
        acc: sum.acc * inv,
        nmi: sum.nmi * inv,
        purity: sum.purity * inv,
        fscore: sum.fscore * inv,
    })
}

/// k-means restart count and base seed used when scoring a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> EvalProtocol {
        EvalProtocol { restarts: 50, seed: 0 }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("metric protocol needs restarts >= 1".into()));
        }
        Ok(())
    }
}

/// One experiment cell: a setting label ("0.30" for a ratio, "2-0-1-3" for
/// an order), the repetition index, the pattern seed used, and the averaged
/// metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setting: String,
    pub rep: usize,
    pub pattern_seed: u64,
    pub metrics: MetricReport,
}

/// Mean and sample standard deviation of each metric within one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub setting: String,
    pub mean: MetricReport,
    pub std: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSweep {
    pub results: Vec<ExperimentResult>,
    pub aggregates: Vec<SweepAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSweep {
    pub results: Vec<ExperimentResult>,
    pub aggregate: SweepAggregate,
}

/// Stable seed derivation so any sweep cell can be reproduced in isolation.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn aggregate(setting: String, reports: &[MetricReport]) -> SweepAggregate {
    let n = reports.len() as f64;
    let mean_of = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mean = MetricReport {
        acc: mean_of(|r| r.acc),
        nmi: mean_of(|r| r.nmi),
        purity: mean_of(|r| r.purity),
        fscore: mean_of(|r| r.fscore),
    };
    let std_of = |f: fn(&MetricReport) -> f64, mu: f64| {
        if reports.len() < 2 {
            0.0
        } else {
            (reports.iter().map(|r| (f(r) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    };
    let std = MetricReport {
        acc: std_of(|r| r.acc, mean.acc),
        nmi: std_of(|r| r.nmi, mean.nmi),
        purity: std_of(|r| r.purity, mean.purity),
        fscore: std_of(|r| r.fscore, mean.fscore),
    };
    SweepAggregate { setting, mean, std }
}

/// CSV table of sweep results: one row per (setting, repetition).
pub fn results_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("setting,rep,pattern_seed,acc,nmi,purity,fscore\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.setting, r.rep, r.pattern_seed, r.metrics.acc, r.metrics.nmi, r.metrics.purity,
            r.metrics.fscore
        ));
    }
    out
}

fn run_cell(
    views: &[ViewBatch],
    data: &SyntheticData,
    k: usize,
    cfg: &SolverConfig,
    restarts: usize,
    metric_seed: u64,
) -> Result<MetricReport> {
    let outcome = run_stream(views, k, cfg)?;
    let truth = align_truth(&data.ids, &data.truth, outcome.state.registry())?;
    protocol_metrics(&outcome.state, &truth, restarts, metric_seed)
}

/// Missing-ratio sweep: for each ratio, `reps` fresh missing patterns over
/// one shared synthetic dataset.
pub fn ratio_sweep(
    spec: &SyntheticSpec,
    ratios: &[f64],
    reps: usize,
    cfg: &SolverConfig,
    proto: &EvalProtocol,
) -> Result<RatioSweep> {
    spec.validate()?;
    cfg.validate()?;
    proto.validate()?;
    if ratios.is_empty() {
        return Err(Error::Config("ratio sweep needs at least one ratio".into()));
    }
    if reps == 0 {
        return Err(Error::Config("ratio sweep needs reps >= 1".into()));
    }
    let data = generate_synthetic(spec)?;
    let mut results = Vec::new();
    let mut aggregates = Vec::new();
    for (ri, &ratio) in ratios.iter().enumerate() {
        let setting = format!("{ratio:.2}");
        let mut cell = Vec::with_capacity(reps);
        for rep in 0..reps {
            let pattern_seed = mix_seed(spec.seed, ri as u64 + 1, rep as u64);
            let (views, _) = apply_missing(&data.views, ratio, pattern_seed)?;
            let metrics = run_cell(
                &views,
                &data,
                spec.k,
                cfg,
                proto.restarts,
                mix_seed(proto.seed, ri as u64 + 1, rep as u64),
            )?;
            results.push(ExperimentResult { setting: setting.clone(), rep, pattern_seed, metrics });
            cell.push(metrics);
        }
        aggregates.push(aggregate(setting, &cell));
    }
    Ok(RatioSweep { results, aggregates })
}

/// Arrival-order sweep: `perms` distinct random view orders, a fresh missing
/// pattern per order, shared synthetic data.
pub fn order_sweep(
    spec: &SyntheticSpec,
    ratio: f64,
    perms: usize,
    cfg: &SolverConfig,
    proto: &EvalProtocol,
) -> Result<OrderSweep> {
    spec.validate()?;
    cfg.validate()?;
    proto.validate()?;
    if perms == 0 {
        return Err(Error::Config("order sweep needs perms >= 1".into()));
    }
    let m = spec.views;
    let available = (1..=m as u64).fold(1u64, |acc, v| acc.saturating_mul(v));
    if perms as u64 > available {
        return Err(Error::Config(format!(
            "{perms} distinct orders requested but {m} views admit only {available}"
        )));
    }
    let data = generate_synthetic(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x0D0E5, 0));
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(perms);
    let mut attempts = 0usize;
    while orders.len() < perms {
        attempts += 1;
        if attempts > 1000 * perms + 1000 {
            return Err(Error::Generation("could not draw distinct view orders".into()));
        }
        let mut p: Vec<usize> = (0..m).collect();
        p.shuffle(&mut rng);
        if seen.insert(p.clone()) {
            orders.push(p);
        }
    }

    let mut results = Vec::new();
    let mut cell = Vec::with_capacity(perms);
    for (oi, order) in orders.iter().enumerate() {
        let permuted = order
            .iter()
            .enumerate()
            .map(|(pos, &v)| data.views[v].clone().with_view_index(pos + 1))
            .collect::<Result<Vec<_>>>()?;
        let pattern_seed = mix_seed(spec.seed, 0x0D0E6, oi as u64);
        let (views, _) = apply_missing(&permuted, ratio, pattern_seed)?;
        let metrics = run_cell(
            &views,
            &data,
            spec.k,
            cfg,
            proto.restarts,
            mix_seed(proto.seed, 0x0D0E6, oi as u64),
        )?;
        let setting = order.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-");
        results.push(ExperimentResult { setting, rep: 0, pattern_seed, metrics });
        cell.push(metrics);
    }
    let aggregate = aggregate("orders".to_string(), &cell);
    Ok(OrderSweep { results, aggregate })
}

/// Wall-time of one view integration at a given sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub n: usize,
    pub iters: usize,
    pub seconds_total: f64,
    pub seconds_per_iter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRun {
    pub points: Vec<ScalePoint>,
    /// Per-iteration time ratios between consecutive sizes.
    pub ratios: Vec<f64>,
}

/// Times integrate_view across sample counts with the iteration count pinned
/// (epsilon small enough that the relative-change test cannot fire except at
/// an exact fixpoint). Reports the median over `repeats` timings per size.
pub fn scale_run(
    sizes: &[usize],
    k: usize,
    d: usize,
    iters: usize,
    repeats: usize,
    seed: u64,
) -> Result<ScaleRun> {
    if sizes.is_empty() {
        return Err(Error::Config("scale run needs at least one size".into()));
    }
    if iters == 0 || repeats == 0 {
        return Err(Error::Config("scale run needs iters >= 1 and repeats >= 1".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let spec = SyntheticSpec {
            n,
            k,
            views: 2,
            dims: vec![d, d],
            separation: 10.0,
            seed: mix_seed(seed, n as u64, 0),
        };
        let data = generate_synthetic(&spec)?;
        let cfg = SolverConfig { epsilon: 1e-300, max_iters: iters, ..SolverConfig::default() };
        let state = init_first_view(&data.views[0], k, &cfg)?;
        let mut totals = Vec::with_capacity(repeats);
        let mut iters_done = 0usize;
        for _ in 0..repeats {
            let t0 = Instant::now();
            let next = integrate_view(&state, &data.views[1], &cfg)?;
            totals.push(t0.elapsed().as_secs_f64());
            iters_done = next.last_diagnostics().iters;
        }
        totals.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
        let median = totals[totals.len() / 2];
        points.push(ScalePoint {
            n,
            iters: iters_done,
            seconds_total: median,
            seconds_per_iter: median / iters_done.max(1) as f64,
        });
    }
    let ratios = points
        .windows(2)
        .map(|w| w[1].seconds_per_iter / w[0].seconds_per_iter)
        .collect();
    Ok(ScaleRun { points, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{acc, kmeans};

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n: 60,
            k: 3,
            views: 3,
            dims: vec![6, 7, 8],
            separation: 10.0,
            seed: 424242,
        }
    }

    #[test]
    fn generator_is_deterministic_and_shaped() {
        let spec = small_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b, "same spec, same data");
        assert_eq!(a.views.len(), 3);
        for (t, v) in a.views.iter().enumerate() {
            assert_eq!(v.view_index, t + 1);
            assert_eq!(v.dim(), spec.dims[t]);
            assert_eq!(v.len(), 60);
            assert_eq!(v.ids, a.ids);
        }
        // Balanced planted clusters.
        let mut counts = vec![0usize; 3];
        for &l in a.truth.labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, vec![20, 20, 20]);
    }

    #[test]
    fn generator_seed_changes_data() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&SyntheticSpec { seed: 7, ..small_spec() }).unwrap();
        assert!(a.views[0].data.max_abs_diff(&b.views[0].data) > 1e-6);
    }

    #[test]
    fn generated_views_are_separable() {
        let data = generate_synthetic(&small_spec()).unwrap();
        // Direct k-means on the raw first view should nail the planted truth
        // at separation 10.
        let best = (0..5)
            .map(|s| kmeans(&data.views[0].data, 3, s).unwrap())
            .map(|p| acc(&data.truth, &p).unwrap())
            .fold(0.0, f64::max);
        assert_eq!(best, 1.0, "separation 10 should be trivially clusterable");
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let mut spec = small_spec();
        spec.dims = vec![6, 7];
        assert_eq!(generate_synthetic(&spec).unwrap_err().kind(), "invalid-configuration");
        let mut spec = small_spec();
        spec.n = 5;
        assert_eq!(generate_synthetic(&spec).unwrap_err().kind(), "invalid-configuration");
        let mut spec = small_spec();
        spec.dims = vec![2, 7, 8];
        assert_eq!(generate_synthetic(&spec).unwrap_err().kind(), "invalid-configuration");
    }

    #[test]
    fn infeasible_separation_reports_generation_error() {
        // 40 centers in the plane with coordinates N(0, separation^2): the
        // chance that all 780 pairs clear the separation is below e^-190 per
        // draw, so 1000 draws cannot realistically succeed.
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let err = place_centers(40, 2, 5.0, &mut rng).unwrap_err();
        assert_eq!(err.kind(), "generation");
    }

    #[test]
    fn missing_protocol_preserves_coverage_and_counts() {
        let data = generate_synthetic(&small_spec()).unwrap();
        for &ratio in &[0.1, 0.3, 0.5] {
            let (views, pattern) = apply_missing(&data.views, ratio, 9).unwrap();
            let drop = (60.0 * ratio).floor() as usize;
            for (v, pv) in views.iter().zip(&pattern.views) {
                assert_eq!(v.len(), 60 - drop, "ratio {ratio}");
                assert_eq!(pv.dropped.len(), drop);
                assert_eq!(pv.kept.len(), 60 - drop);
            }
            let report = coverage_check(&data.ids, &views).unwrap();
            assert!(report.is_complete(), "ratio {ratio} lost coverage");
        }
    }

    #[test]
    fn missing_protocol_r_zero_is_identity() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let (views, pattern) = apply_missing(&data.views, 0.0, 3).unwrap();
        assert_eq!(views, data.views);
        assert!(pattern.views.iter().all(|v| v.dropped.is_empty()));
    }

    #[test]
    fn missing_protocol_is_deterministic_per_seed() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let (a, pa) = apply_missing(&data.views, 0.3, 5).unwrap();
        let (b, pb) = apply_missing(&data.views, 0.3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let (c, _) = apply_missing(&data.views, 0.3, 6).unwrap();
        assert_ne!(a, c, "different seed should give a different pattern");
    }

    #[test]
    fn missing_protocol_last_view_only_drops_covered_samples() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let (_, pattern) = apply_missing(&data.views, 0.5, 11).unwrap();
        let earlier_kept: HashSet<&String> = pattern.views[..2].iter().flat_map(|v| v.kept.iter()).collect();
        for dropped in &pattern.views[2].dropped {
            assert!(
                earlier_kept.contains(dropped),
                "last view dropped '{dropped}', which no earlier view kept"
            );
        }
    }

    #[test]
    fn missing_protocol_rejects_bad_inputs() {
        let data = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(apply_missing(&data.views, 0.9, 1).unwrap_err().kind(), "invalid-configuration");
        assert_eq!(apply_missing(&data.views, -0.1, 1).unwrap_err().kind(), "invalid-configuration");
        let single = &data.views[..1];
        assert_eq!(apply_missing(single, 0.3, 1).unwrap_err().kind(), "protocol");
        assert!(apply_missing(single, 0.0, 1).is_ok(), "r = 0 works with one view");
    }

    #[test]
    fn zero_fill_at_r_zero_equals_plain_run() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let cfg = SolverConfig::default();
        let plain = run_stream(&data.views, 3, &cfg).unwrap();
        let filled = run_fill_baseline(&data.views, FillMode::Zero, 3, &cfg).unwrap();
        assert_eq!(plain.state.z().data(), filled.state.z().data());
        for (a, b) in plain.per_view.iter().zip(&filled.per_view) {
            assert_eq!(a.objective_trace, b.objective_trace, "traces must match bit for bit");
        }
    }

    #[test]
    fn average_fill_uses_per_feature_means() {
        // One view observing two samples [1,3] and [3,5]; the missing third
        // sample must become the mean column [2,4].
        let ids: Vec<SampleId> = ["a", "b", "c"].iter().map(|s| SampleId::new(*s).unwrap()).collect();
        let v1 = ViewBatch::new(
            1,
            Matrix::from_vec(2, 3, vec![0.0, 1.0, 2.0, 1.0, 2.0, 3.0]).unwrap(),
            ids.clone(),
        )
        .unwrap();
        let v2 = ViewBatch::new(
            2,
            Matrix::from_vec(2, 2, vec![1.0, 3.0, 3.0, 5.0]).unwrap(),
            vec![ids[0].clone(), ids[1].clone()],
        )
        .unwrap();
        let outcome = run_fill_baseline(&[v1, v2], FillMode::Average, 2, &SolverConfig::default());
        // Can't observe the filled matrix directly through the solver, so
        // rebuild the fill here and check the run at least succeeds with it.
        assert!(outcome.is_ok());
        // Direct check of the fill arithmetic.
        let observed = Matrix::from_vec(2, 2, vec![1.0, 3.0, 3.0, 5.0]).unwrap();
        let mean: Vec<f64> = (0..2)
            .map(|r| (0..2).map(|c| observed.get(r, c)).sum::<f64>() / 2.0)
            .collect();
        assert_eq!(mean, vec![2.0, 4.0]);
    }

    #[test]
    fn align_truth_reorders_by_registry() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let (views, _) = apply_missing(&data.views, 0.3, 21).unwrap();
        let outcome = run_stream(&views, 3, &SolverConfig::default()).unwrap();
        let aligned = align_truth(&data.ids, &data.truth, outcome.state.registry()).unwrap();
        assert_eq!(aligned.len(), data.truth.len());
        // Spot-check: every registry id keeps its original label.
        let lookup: HashMap<&SampleId, usize> = data
            .ids
            .iter()
            .zip(data.truth.labels())
            .map(|(id, &l)| (id, l))
            .collect();
        for (pos, id) in outcome.state.registry().ids().iter().enumerate() {
            assert_eq!(aligned.labels()[pos], lookup[id]);
        }
    }

    #[test]
    fn ratio_sweep_produces_full_grid() {
        let spec = small_spec();
        let cfg = SolverConfig::default();
        let proto = EvalProtocol { restarts: 3, seed: 1 };
        let sweep = ratio_sweep(&spec, &[0.0, 0.3], 2, &cfg, &proto).unwrap();
        assert_eq!(sweep.results.len(), 4);
        assert_eq!(sweep.aggregates.len(), 2);
        for r in &sweep.results {
            for v in [r.metrics.acc, r.metrics.nmi, r.metrics.purity, r.metrics.fscore] {
                assert!((0.0..=1.0).contains(&v), "metric out of range: {v}");
            }
        }
        let csv = results_csv(&sweep.results);
        assert!(csv.starts_with("setting,rep,pattern_seed,acc,nmi,purity,fscore\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn order_sweep_draws_distinct_orders() {
        let spec = small_spec();
        let cfg = SolverConfig::default();
        let proto = EvalProtocol { restarts: 2, seed: 2 };
        let sweep = order_sweep(&spec, 0.2, 6, &cfg, &proto).unwrap();
        assert_eq!(sweep.results.len(), 6);
        let distinct: HashSet<&String> = sweep.results.iter().map(|r| &r.setting).collect();
        assert_eq!(distinct.len(), 6, "all 3! orders must appear once");
        assert_eq!(
            order_sweep(&spec, 0.2, 7, &cfg, &proto).unwrap_err().kind(),
            "invalid-configuration",
            "3 views admit only 6 orders"
        );
    }

    #[test]
    fn scale_run_reports_points_and_ratios() {
        let run = scale_run(&[40, 80], 3, 8, 5, 2, 3).unwrap();
        assert_eq!(run.points.len(), 2);
        assert_eq!(run.ratios.len(), 1);
        for p in &run.points {
            assert!(p.seconds_per_iter > 0.0);
            assert!(p.iters >= 1 && p.iters <= 5);
        }
    }

    #[test]
    fn mix_seed_spreads_and_is_stable() {
        assert_eq!(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
        let mut seen = HashSet::new();
        for a in 0..20u64 {
            for b in 0..20u64 {
                seen.insert(mix_seed(99, a, b));
            }
        }
        assert_eq!(seen.len(), 400, "derived seeds collided");
    }
}
