//! Detection scoring: optimal assignment, thresholded matching and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{center_unchecked, GridCell, GridConfig, HeatMap};

/// Success radius between a detection and an object, in meters.
pub const DEFAULT_MATCH_THRESHOLD_M: f64 = 0.5;

/// Minimum-cost assignment of `min(n, m)` row/column pairs.
///
/// Rectangular inputs are padded to a square with a constant sentinel, which
/// shifts every complete assignment by the same amount. Runs in `O(k³)` with
/// `k = max(n, m)`. Pairs are returned sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|row| row.len() != m) {
        return Err(invalid("cost matrix rows have different lengths"));
    }
    if let Some(bad) = cost.iter().flatten().find(|v| !v.is_finite()) {
        return Err(invalid(format!("cost matrix entry {bad} is not finite")));
    }
    if n == 0 || m == 0 {
        return Ok(Vec::new());
    }
    let k = n.max(m);
    let sentinel = cost.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())) + 1.0;
    let at = |i: usize, j: usize| if i < n && j < m { cost[i][j] } else { sentinel };

    // Shortest augmenting paths with row/column potentials; 1-based with a
    // virtual column 0.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut row_of = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=k)
        .filter(|&j| row_of[j] >= 1 && row_of[j] <= n && j <= m)
        .map(|j| (row_of[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(detection index, object index, distance in meters)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_objects: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.pairs.len(),
            fp: self.unmatched_detections.len(),
            fn_: self.unmatched_objects.len(),
        }
    }
}

/// Optimal assignment on center-to-center distances; assigned pairs farther
/// apart than `threshold_m` count as a miss on both sides.
pub fn match_detections(
    dets: &[GridCell],
    objects: &[GridCell],
    cfg: &GridConfig,
    threshold_m: f64,
) -> Result<MatchResult> {
    for &c in dets.iter().chain(objects) {
        cfg.check_cell(c)?;
    }
    let dist: Vec<Vec<f64>> = dets
        .iter()
        .map(|&d| {
            let pd = center_unchecked(d, cfg);
            objects.iter().map(|&o| pd.distance(center_unchecked(o, cfg))).collect()
        })
        .collect();
    let mut det_used = vec![false; dets.len()];
    let mut obj_used = vec![false; objects.len()];
    let mut pairs = Vec::new();
    for (i, j) in hungarian(&dist)? {
        if dist[i][j] <= threshold_m {
            det_used[i] = true;
            obj_used[j] = true;
            pairs.push((i, j, dist[i][j]));
        }
    }
    let unmatched = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect();
    Ok(MatchResult {
        pairs,
        unmatched_detections: unmatched(&det_used),
        unmatched_objects: unmatched(&obj_used),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean `2PR / (P + R)`, 0 when `P + R = 0`.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Mean squared difference over cells.
pub fn heatmap_mse(pred: &HeatMap, truth: &HeatMap) -> Result<f64> {
    let (a, b) = (pred.config(), truth.config());
    if a.s_u != b.s_u || a.s_v != b.s_v {
        return Err(invalid(format!(
            "heat-map shapes differ: {}×{} vs {}×{}",
            a.s_u, a.s_v, b.s_u, b.s_v
        )));
    }
    let sum: f64 = pred.values().iter().zip(truth.values()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.values().len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub counts: Counts,
    pub mse: Option<f64>,
}

/// Scores pooled over a set of sequences (micro-averaged counts).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean heat-map MSE over sequences; `None` for methods without a heat-map.
    pub mse: Option<f64>,
    pub per_sequence: Vec<SequenceScore>,
}

impl EvalReport {
    pub fn n_sequences(&self) -> usize {
        self.per_sequence.len()
    }
}

/// Pools per-sequence scores into a report.
pub fn compute_metrics(method: &str, dataset: &str, seed: u64, per_sequence: Vec<SequenceScore>) -> EvalReport {
    let counts: Counts = per_sequence.iter().map(|s| s.counts).sum();
    let mses: Vec<f64> = per_sequence.iter().filter_map(|s| s.mse).collect();
    let mse = if mses.is_empty() || mses.len() != per_sequence.len() {
        None
    } else {
        Some(mses.iter().sum::<f64>() / mses.len() as f64)
    };
    EvalReport {
        method: method.to_string(),
        dataset: dataset.to_string(),
        seed,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        mse,
        per_sequence,
    }
}
