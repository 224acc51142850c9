//! Cluster labeling and external evaluation metrics.
//!
//! k-means treats matrix columns as points, matching the layout of both the
//! feature blocks and the consensus matrix. All metrics compare a predicted
//! partition against ground truth through the k_truth x k_pred contingency
//! table.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Hard assignment of n samples to clusters 0..k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that every label is below k.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Partition> {
        if k == 0 {
            return Err(Error::Config("partition needs k >= 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::Validation("partition has no samples".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Validation(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Partition { labels, k })
    }

    /// Infers k as max label + 1.
    pub fn from_labels(labels: Vec<usize>) -> Result<Partition> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Partition::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The four external metrics reported by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub fscore: f64,
}

fn squared_dist(points: &Matrix, col: usize, center: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (r, &cr) in center.iter().enumerate() {
        let d = points.get(r, col) - cr;
        acc += d * d;
    }
    acc
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Columns of `points` are the samples. Runs to an assignment fixpoint or 300
/// iterations; clusters that empty out are reseeded with the point farthest
/// from its current center (donor cluster must keep at least one point).
/// Fully deterministic for a fixed seed.
pub fn kmeans_with_wcss(points: &Matrix, k: usize, seed: u64) -> Result<(Partition, f64)> {
    let n = points.cols();
    let d = points.rows();
    if k == 0 {
        return Err(Error::Config("kmeans needs k >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Validation("kmeans needs at least one point".into()));
    }
    if n < k {
        return Err(Error::Config(format!("kmeans with k = {k} on only {n} points")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let column = |c: usize| -> Vec<f64> { (0..d).map(|r| points.get(r, c)).collect() };

    // k-means++ seeding: subsequent centers drawn with probability
    // proportional to the squared distance to the nearest chosen center.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(column(rng.random_range(0..n)));
    let mut best_d2 = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = centers.last().expect("at least one center");
        for c in 0..n {
            let dist = squared_dist(points, c, last);
            if dist < best_d2[c] {
                best_d2[c] = dist;
            }
        }
        let total: f64 = best_d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (c, &w) in best_d2.iter().enumerate() {
                cum += w;
                if target < cum {
                    chosen = c;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with chosen centers; any pick is as good.
            rng.random_range(0..n)
        };
        centers.push(column(pick));
    }

    let mut labels = vec![0usize; n];
    let mut first_pass = true;
    for _ in 0..300 {
        // Assignment step; ties go to the lowest cluster index.
        let mut changed = false;
        for c in 0..n {
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for (j, center) in centers.iter().enumerate() {
                let dist = squared_dist(points, c, center);
                if dist < best_dist {
                    best_dist = dist;
                    best = j;
                }
            }
            if labels[c] != best || first_pass {
                labels[c] = best;
                changed = true;
            }
        }
        // first_pass forces at least one center update so seeding by
        // coincident points cannot freeze the loop at iteration zero.
        first_pass = false;

        // Reseed empty clusters from the globally farthest point, never
        // draining a singleton donor. Each fix fills one empty cluster, so
        // the loop ends after at most k rounds.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for _ in 0..k {
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far: Option<(usize, f64)> = None;
            for c in 0..n {
                if counts[labels[c]] < 2 {
                    continue;
                }
                let dist = squared_dist(points, c, &centers[labels[c]]);
                if far.map_or(true, |(_, fd)| dist > fd) {
                    far = Some((c, dist));
                }
            }
            let (point, _) = far.expect("a donor cluster with >= 2 points exists");
            counts[labels[point]] -= 1;
            labels[point] = empty;
            counts[empty] = 1;
            centers[empty] = column(point);
            changed = true;
        }

        if !changed {
            break;
        }

        // Update step: centers move to the mean of their members.
        for center in centers.iter_mut() {
            center.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut sums = vec![0usize; k];
        for c in 0..n {
            sums[labels[c]] += 1;
            for r in 0..d {
                centers[labels[c]][r] += points.get(r, c);
            }
        }
        for (j, center) in centers.iter_mut().enumerate() {
            debug_assert!(sums[j] > 0, "cluster {j} empty after reseeding");
            let inv = 1.0 / sums[j] as f64;
            center.iter_mut().for_each(|v| *v *= inv);
        }
    }

    let wcss: f64 = (0..n).map(|c| squared_dist(points, c, &centers[labels[c]])).sum();
    if !wcss.is_finite() {
        return Err(Error::Numerical("k-means produced a non-finite objective".into()));
    }
    Ok((Partition::new(labels, k)?, wcss))
}

/// [`kmeans_with_wcss`] without the objective value.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<Partition> {
    kmeans_with_wcss(points, k, seed).map(|(p, _)| p)
}

/// k_truth x k_pred joint count table.
fn contingency(truth: &Partition, pred: &Partition) -> Result<Vec<Vec<usize>>> {
    if truth.len() != pred.len() {
        return Err(Error::Validation(format!(
            "partition lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut table = vec![vec![0usize; pred.k()]; truth.k()];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        table[t][p] += 1;
    }
    Ok(table)
}

/// Minimum-cost perfect assignment on a square cost matrix (row i -> col
/// assign[i]). Classic potentials-based O(nn^3) routine.
fn hungarian_min_square(cost: &[i64], nn: usize) -> Vec<usize> {
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; nn + 1];
    let mut v = vec![0i64; nn + 1];
    let mut p = vec![0usize; nn + 1];
    let mut way = vec![0usize; nn + 1];
    for i in 1..=nn {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; nn + 1];
        let mut used = vec![false; nn + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=nn {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * nn + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=nn {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; nn];
    for j in 1..=nn {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Clustering accuracy: the best one-to-one matching between predicted and
/// true clusters, as a fraction of samples.
pub fn acc(truth: &Partition, pred: &Partition) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let nn = truth.k().max(pred.k());
    // Pad to square and negate so that minimum cost = maximum agreement.
    let mut cost = vec![0i64; nn * nn];
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i * nn + j] = -(c as i64);
        }
    }
    let assign = hungarian_min_square(&cost, nn);
    let matched: usize = table
        .iter()
        .enumerate()
        .map(|(i, row)| row.get(assign[i]).copied().unwrap_or(0))
        .sum();
    Ok(matched as f64 / truth.len() as f64)
}

/// Normalized mutual information with geometric-mean normalization and
/// natural logarithms. Conventions: 1 when both partitions are single
/// clusters, 0 when exactly one of them carries no information.
pub fn nmi(truth: &Partition, pred: &Partition) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let n = truth.len() as f64;
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let mut col_sums = vec![0usize; pred.k()];
    for row in &table {
        for (j, &c) in row.iter().enumerate() {
            col_sums[j] += c;
        }
    }
    let entropy = |sums: &[usize]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_t = entropy(&row_sums);
    let h_p = entropy(&col_sums);
    const TINY: f64 = 1e-15;
    if h_t < TINY && h_p < TINY {
        return Ok(1.0);
    }
    if h_t < TINY || h_p < TINY {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pij = c as f64 / n;
            mi += pij * (n * c as f64 / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
        }
    }
    Ok((mi / (h_t * h_p).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of samples that agree with the majority true label of their
/// predicted cluster.
pub fn purity(truth: &Partition, pred: &Partition) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let mut majority_total = 0usize;
    for j in 0..pred.k() {
        majority_total += table.iter().map(|row| row[j]).max().unwrap_or(0);
    }
    Ok(majority_total as f64 / truth.len() as f64)
}

/// Pairwise F-score: harmonic mean of pair precision and recall, where a
/// pair counts as positive when both samples share a predicted cluster.
/// Degenerate denominators yield 0.
pub fn fscore(truth: &Partition, pred: &Partition) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let comb2 = |x: usize| -> u128 { (x as u128) * (x.saturating_sub(1) as u128) / 2 };
    let tp: u128 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let same_pred: u128 = {
        let mut col_sums = vec![0usize; pred.k()];
        for row in &table {
            for (j, &c) in row.iter().enumerate() {
                col_sums[j] += c;
            }
        }
        col_sums.iter().map(|&c| comb2(c)).sum()
    };
    let same_truth: u128 = table.iter().map(|row| comb2(row.iter().sum())).sum();
    let precision = if same_pred > 0 { tp as f64 / same_pred as f64 } else { 0.0 };
    let recall = if same_truth > 0 { tp as f64 / same_truth as f64 } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// All four metrics at once.
pub fn evaluate(truth: &Partition, pred: &Partition) -> Result<MetricReport> {
    Ok(MetricReport {
        acc: acc(truth, pred)?,
        nmi: nmi(truth, pred)?,
        purity: purity(truth, pred)?,
        fscore: fscore(truth, pred)?,
    })
}
