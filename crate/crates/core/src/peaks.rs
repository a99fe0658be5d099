//! Local-maximum extraction and the two detectors that need no training.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{GridCell, GridConfig, HeatMap};
use crate::render::{mean_gaze_map, mean_intersection_map, Frame, GazeSequence};

/// Maps the global maximum of a heat-map to the minimum peak height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrink {
    /// `x ↦ ln(1 + x)`.
    Log1p,
    /// `x ↦ c·x` with `c ∈ [0, 1]`.
    Fraction(f64),
}

impl Shrink {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Shrink::Log1p => x.ln_1p(),
            Shrink::Fraction(c) => c * x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Half-width of the square neighbourhood; 2 gives a 5×5 window.
    pub neighborhood_radius: usize,
    pub shrink: Shrink,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            neighborhood_radius: 2,
            shrink: Shrink::Log1p,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighborhood_radius == 0 {
            return Err(invalid("peak neighbourhood radius must be at least 1"));
        }
        if let Shrink::Fraction(c) = self.shrink {
            if !(0.0..=1.0).contains(&c) {
                return Err(invalid(format!("shrink fraction must lie in [0, 1], got {c}")));
            }
        }
        Ok(())
    }
}

fn is_window_max(m: &HeatMap, c: GridCell, r: usize) -> bool {
    let g = m.config();
    let v = m.get(c);
    let (u0, u1) = (c.u.saturating_sub(r).max(1), (c.u + r).min(g.s_u));
    let (v0, v1) = (c.v.saturating_sub(r).max(1), (c.v + r).min(g.s_v));
    (u0..=u1).all(|u| (v0..=v1).all(|w| m.get(GridCell::new(u, w)) <= v))
}

/// Cells that are maxima of their clipped `(2r+1)²` neighbourhood, strictly
/// positive, and at least `shrink(global max)`.
///
/// Adjacent (8-connected) qualifying cells with equal values form a plateau
/// and are reported once, at their lexicographically smallest `(u, v)`.
/// The result is sorted by decreasing value, then by `(u, v)`.
pub fn extract_peaks(m: &HeatMap, pc: &PeakConfig) -> Vec<GridCell> {
    let g = m.config();
    let threshold = pc.shrink.apply(m.max());
    let r = pc.neighborhood_radius.max(1);
    let qualifies: Vec<bool> = g
        .cells()
        .map(|c| {
            let v = m.get(c);
            v > 0.0 && v >= threshold && is_window_max(m, c, r)
        })
        .collect();

    let mut seen = vec![false; g.len()];
    let mut peaks = Vec::new();
    for start in 0..g.len() {
        if !qualifies[start] || seen[start] {
            continue;
        }
        // Cells are visited in lexicographic order, so `start` is the
        // smallest member of its plateau.
        seen[start] = true;
        let value = m.values()[start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let c = g.cell_at(i);
            for du in -1i64..=1 {
                for dv in -1i64..=1 {
                    let (u, v) = (c.u as i64 + du, c.v as i64 + dv);
                    if u < 1 || v < 1 || u > g.s_u as i64 || v > g.s_v as i64 {
                        continue;
                    }
                    let j = g.index(GridCell::new(u as usize, v as usize));
                    if qualifies[j] && !seen[j] && m.values()[j] == value {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        peaks.push((value, g.cell_at(start)));
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    peaks.into_iter().map(|(_, c)| c).collect()
}

/// Cone heuristic: peaks of the mean gaze heat-map.
pub fn detect_cone(s: &GazeSequence, pc: &PeakConfig) -> Vec<GridCell> {
    extract_peaks(&mean_gaze_map(s), pc)
}

/// Intersect heuristic: peaks of the time-averaged cone-intersection map.
pub fn detect_intersect(frames: &[Frame], cfg: &GridConfig, epsilon: f64, pc: &PeakConfig) -> Result<Vec<GridCell>> {
    Ok(extract_peaks(&mean_intersection_map(frames, cfg, epsilon)?, pc))
}
