//! Gaze cones, their temporal aggregates and ground-truth object heat-maps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{world_to_cell, GridCell, GridConfig, HeatMap, WorldPoint};

/// Default half-aperture of a gaze cone: 2°.
pub const DEFAULT_EPSILON: f64 = 2.0 * PI / 180.0;
/// Default spread of object peaks, in cells.
pub const DEFAULT_SIGMA_OMEGA: f64 = 1.5;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonState {
    pub position: WorldPoint,
    /// Head pan in radians, `(−π, π]`, measured from +x towards +y.
    pub pan: f64,
}

impl PersonState {
    pub fn new(position: WorldPoint, pan: f64) -> Self {
        Self { position, pan: wrap_angle(pan) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub persons: Vec<PersonState>,
}

impl Frame {
    pub fn new(persons: Vec<PersonState>) -> Self {
        Self { persons }
    }
}

/// Per-frame gaze heat-maps `Γ_1 … Γ_T` over a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeSequence {
    cfg: GridConfig,
    maps: Vec<HeatMap>,
}

impl GazeSequence {
    pub fn new(cfg: &GridConfig, maps: Vec<HeatMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(invalid("a gaze sequence needs at least one frame"));
        }
        if maps.iter().any(|m| m.config() != cfg || !m.is_normalized()) {
            return Err(invalid("gaze sequence maps must be normalized and share the grid"));
        }
        Ok(Self { cfg: *cfg, maps })
    }

    /// Renders `frame_gaze_map` for every frame.
    pub fn from_frames(frames: &[Frame], cfg: &GridConfig, epsilon: f64) -> Result<Self> {
        let maps = frames.iter().map(|f| frame_gaze_map(f, cfg, epsilon)).collect();
        Self::new(cfg, maps)
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn maps(&self) -> &[HeatMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Per-person cone rasteriser. Angles to the `(s_u+1)·(s_v+1)` cell corners
/// and the `s_u·s_v` centers are computed once and shared by adjacent cells.
struct ConeRaster<'a> {
    cfg: &'a GridConfig,
    corner_hit: Vec<bool>,
}

impl<'a> ConeRaster<'a> {
    fn new(cfg: &'a GridConfig) -> Self {
        Self {
            cfg,
            corner_hit: vec![false; (cfg.s_u + 1) * (cfg.s_v + 1)],
        }
    }

    fn in_cone(origin: WorldPoint, pan: f64, epsilon: f64, q: WorldPoint) -> bool {
        let (dx, dy) = (q.x - origin.x, q.y - origin.y);
        if dx == 0.0 && dy == 0.0 {
            return false;
        }
        wrap_angle(dy.atan2(dx) - pan).abs() < epsilon
    }

    /// Calls `hit(index)` for every cell inside the cone of `p`.
    fn rasterize(&mut self, p: &PersonState, epsilon: f64, mut hit: impl FnMut(usize)) {
        let cfg = self.cfg;
        let (w, h) = (cfg.cell_width(), cfg.cell_height());
        let stride = cfg.s_v + 1;
        for i in 0..=cfg.s_u {
            for j in 0..=cfg.s_v {
                let q = WorldPoint::new(cfg.x_min + i as f64 * w, cfg.y_min + j as f64 * h);
                self.corner_hit[i * stride + j] = Self::in_cone(p.position, p.pan, epsilon, q);
            }
        }
        // Positions are finite by construction, so the own cell always exists.
        let own = world_to_cell(p.position, cfg).map(|c| cfg.index(c)).ok();
        for idx in 0..cfg.len() {
            if Some(idx) == own {
                continue;
            }
            let (i, j) = (idx / cfg.s_v, idx % cfg.s_v);
            let corners = [
                i * stride + j,
                i * stride + j + 1,
                (i + 1) * stride + j,
                (i + 1) * stride + j + 1,
            ];
            let center = WorldPoint::new(cfg.x_min + (i as f64 + 0.5) * w, cfg.y_min + (j as f64 + 0.5) * h);
            if corners.iter().any(|&c| self.corner_hit[c]) || Self::in_cone(p.position, p.pan, epsilon, center) {
                hit(idx);
            }
        }
    }
}

/// Binary cone map of one person. A cell is lit when its center or one of its
/// corners lies strictly within `epsilon` of the head pan direction.
pub fn render_cone(p: &PersonState, cfg: &GridConfig, epsilon: f64) -> HeatMap {
    let mut values = vec![0.0; cfg.len()];
    ConeRaster::new(cfg).rasterize(p, epsilon, |i| values[i] = 1.0);
    HeatMap::from_parts_unchecked(*cfg, values, true)
}

fn cone_counts(f: &Frame, cfg: &GridConfig, epsilon: f64) -> Vec<u32> {
    let mut counts = vec![0u32; cfg.len()];
    let mut raster = ConeRaster::new(cfg);
    for p in &f.persons {
        raster.rasterize(p, epsilon, |i| counts[i] += 1);
    }
    counts
}

/// `Γ_t`: mean of the per-person cones; all zeros for an empty frame.
pub fn frame_gaze_map(f: &Frame, cfg: &GridConfig, epsilon: f64) -> HeatMap {
    let n = f.persons.len();
    if n == 0 {
        return HeatMap::zeros(cfg);
    }
    let values = cone_counts(f, cfg, epsilon).into_iter().map(|c| c as f64 / n as f64).collect();
    HeatMap::from_parts_unchecked(*cfg, values, true)
}

/// Cell-wise mean of equally sized maps; all zeros for an empty iterator.
pub fn mean_of<'m>(cfg: &GridConfig, maps: impl ExactSizeIterator<Item = &'m HeatMap>) -> HeatMap {
    let t = maps.len();
    let mut acc = vec![0.0; cfg.len()];
    for m in maps {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= t as f64;
    }
    HeatMap::from_parts_unchecked(*cfg, acc, true)
}

/// `Γ`: time average of a gaze sequence.
pub fn mean_gaze_map(s: &GazeSequence) -> HeatMap {
    mean_of(&s.cfg, s.maps.iter())
}

/// `Γ_t^inter`: 1 where at least two cones overlap.
pub fn intersection_map(f: &Frame, cfg: &GridConfig, epsilon: f64) -> HeatMap {
    let values = cone_counts(f, cfg, epsilon)
        .into_iter()
        .map(|c| if c >= 2 { 1.0 } else { 0.0 })
        .collect();
    HeatMap::from_parts_unchecked(*cfg, values, true)
}

/// `(Γ_t, Γ_t^inter)` from a single rasterisation pass.
pub fn frame_maps(f: &Frame, cfg: &GridConfig, epsilon: f64) -> (HeatMap, HeatMap) {
    let n = f.persons.len();
    if n == 0 {
        return (HeatMap::zeros(cfg), HeatMap::zeros(cfg));
    }
    let counts = cone_counts(f, cfg, epsilon);
    let gaze = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let inter = counts.iter().map(|&c| if c >= 2 { 1.0 } else { 0.0 }).collect();
    (
        HeatMap::from_parts_unchecked(*cfg, gaze, true),
        HeatMap::from_parts_unchecked(*cfg, inter, true),
    )
}

/// `Γ^inter`: time average of the per-frame intersection maps.
pub fn mean_intersection_map(frames: &[Frame], cfg: &GridConfig, epsilon: f64) -> Result<HeatMap> {
    if frames.is_empty() {
        return Err(invalid("intersection map needs at least one frame"));
    }
    let maps: Vec<HeatMap> = frames.iter().map(|f| intersection_map(f, cfg, epsilon)).collect();
    Ok(mean_of(cfg, maps.iter()))
}

/// `Ω`: max over objects of an isotropic Gaussian in cell units.
pub fn object_heatmap(objects: &[GridCell], cfg: &GridConfig, sigma_omega: f64) -> Result<HeatMap> {
    if !(sigma_omega > 0.0 && sigma_omega.is_finite()) {
        return Err(invalid(format!("sigma_omega must be positive, got {sigma_omega}")));
    }
    for &o in objects {
        cfg.check_cell(o)?;
    }
    let denom = 2.0 * sigma_omega * sigma_omega;
    let values = cfg
        .cells()
        .map(|p| objects.iter().map(|&o| (-p.dist2(o) / denom).exp()).fold(0.0, f64::max))
        .collect();
    Ok(HeatMap::from_parts_unchecked(*cfg, values, true))
}
