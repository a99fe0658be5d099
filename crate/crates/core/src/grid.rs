//! Top-view discretisation of the room and the heat-map container.
//!
//! A [`GridConfig`] maps the rectangle `[x_min, x_max] × [y_min, y_max]` (meters)
//! onto `s_u × s_v` cells with 1-based indices. A world point goes to the cell
//! `u = ⌈s_u · (x − x_min) / (x_max − x_min)⌉`, clamped into `[1, s_u]` so that
//! points on the lower border, and positions that drift slightly outside the
//! room, stay addressable. The same holds for `v` along `y`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance used when checking that a normalized map lies in `[0, 1]`.
pub const NORMALIZED_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub s_u: usize,
    pub s_v: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GridConfig {
    /// 32 × 32 cells over a 3 m × 3 m room.
    fn default() -> Self {
        Self {
            s_u: 32,
            s_v: 32,
            x_min: 0.0,
            x_max: 3.0,
            y_min: 0.0,
            y_max: 3.0,
        }
    }
}

impl GridConfig {
    pub fn new(s_u: usize, s_v: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let cfg = Self { s_u, s_v, x_min, x_max, y_min, y_max };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square `cells × cells` grid over `[0, size_m]²`.
    pub fn square(cells: usize, size_m: f64) -> Result<Self> {
        Self::new(cells, cells, 0.0, size_m, 0.0, size_m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(invalid(format!(
                "grid bounds must be finite with min < max, got x [{}, {}], y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.s_u < 2 || self.s_v < 2 {
            return Err(invalid(format!("grid needs at least 2×2 cells, got {}×{}", self.s_u, self.s_v)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.s_u * self.s_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        (self.x_max - self.x_min) / self.s_u as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.y_max - self.y_min) / self.s_v as f64
    }

    pub fn contains(&self, c: GridCell) -> bool {
        (1..=self.s_u).contains(&c.u) && (1..=self.s_v).contains(&c.v)
    }

    pub fn check_cell(&self, c: GridCell) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(invalid(format!("cell ({}, {}) outside a {}×{} grid", c.u, c.v, self.s_u, self.s_v)))
        }
    }

    /// Row-major offset of a cell: `(u − 1) · s_v + (v − 1)`.
    pub fn index(&self, c: GridCell) -> usize {
        (c.u - 1) * self.s_v + (c.v - 1)
    }

    pub fn cell_at(&self, index: usize) -> GridCell {
        GridCell {
            u: index / self.s_v + 1,
            v: index % self.s_v + 1,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    pub fn in_bounds(&self, p: WorldPoint) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    /// Distance from `p` to the nearest wall of the room (negative outside).
    pub fn distance_to_boundary(&self, p: WorldPoint) -> f64 {
        (p.x - self.x_min).min(self.x_max - p.x).min(p.y - self.y_min).min(self.y_max - p.y)
    }
}

/// 1-based grid indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub u: usize,
    pub v: usize,
}

impl GridCell {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }

    /// Squared distance in cell units.
    pub fn dist2(self, other: GridCell) -> f64 {
        let du = self.u as f64 - other.u as f64;
        let dv = self.v as f64 - other.v as f64;
        du * du + dv * dv
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction of `other − self`, in `(−π, π]`.
    pub fn bearing_to(self, other: WorldPoint) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

fn axis_index(value: f64, lo: f64, hi: f64, cells: usize) -> usize {
    let raw = (cells as f64 * (value - lo) / (hi - lo)).ceil();
    raw.clamp(1.0, cells as f64) as usize
}

pub fn world_to_cell(p: WorldPoint, cfg: &GridConfig) -> Result<GridCell> {
    if !p.is_finite() {
        return Err(invalid(format!("non-finite position ({}, {})", p.x, p.y)));
    }
    Ok(GridCell {
        u: axis_index(p.x, cfg.x_min, cfg.x_max, cfg.s_u),
        v: axis_index(p.y, cfg.y_min, cfg.y_max, cfg.s_v),
    })
}

pub fn cell_center(c: GridCell, cfg: &GridConfig) -> Result<WorldPoint> {
    cfg.check_cell(c)?;
    Ok(center_unchecked(c, cfg))
}

pub(crate) fn center_unchecked(c: GridCell, cfg: &GridConfig) -> WorldPoint {
    WorldPoint {
        x: cfg.x_min + (c.u as f64 - 0.5) * cfg.cell_width(),
        y: cfg.y_min + (c.v as f64 - 0.5) * cfg.cell_height(),
    }
}

/// Euclidean distance between cell centers, in meters.
pub fn cell_distance_m(a: GridCell, b: GridCell, cfg: &GridConfig) -> Result<f64> {
    Ok(cell_center(a, cfg)?.distance(cell_center(b, cfg)?))
}

/// Real-valued map over the grid, stored row-major by [`GridConfig::index`].
///
/// Gaze and object heat-maps are *normalized*: every value lies in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    config: GridConfig,
    values: Vec<f64>,
    normalized: bool,
}

impl HeatMap {
    pub fn zeros(config: &GridConfig) -> Self {
        Self {
            config: *config,
            values: vec![0.0; config.len()],
            normalized: true,
        }
    }

    /// Any finite values.
    pub fn new(config: &GridConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != config.len() {
            return Err(invalid(format!("heat-map needs {} values, got {}", config.len(), values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("heat-map value {bad} is not finite")));
        }
        Ok(Self {
            config: *config,
            values,
            normalized: false,
        })
    }

    /// Finite values in `[0, 1]` (up to [`NORMALIZED_TOLERANCE`]).
    pub fn normalized(config: &GridConfig, values: Vec<f64>) -> Result<Self> {
        let mut map = Self::new(config, values)?;
        let tol = NORMALIZED_TOLERANCE;
        if let Some(bad) = map.values.iter().find(|&&v| !(-tol..=1.0 + tol).contains(&v)) {
            return Err(invalid(format!("normalized heat-map value {bad} outside [0, 1]")));
        }
        map.normalized = true;
        Ok(map)
    }

    pub(crate) fn from_parts_unchecked(config: GridConfig, values: Vec<f64>, normalized: bool) -> Self {
        debug_assert_eq!(values.len(), config.len());
        Self { config, values, normalized }
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// # Panics
    /// Panics if `c` is outside the grid.
    pub fn get(&self, c: GridCell) -> f64 {
        assert!(self.config.contains(c), "cell {c:?} outside grid");
        self.values[self.config.index(c)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Affine rescale to `[0, 1]`; a constant map becomes all zeros.
    pub fn min_max_rescaled(&self) -> HeatMap {
        let (lo, hi) = (self.min(), self.max());
        let values = if hi > lo {
            self.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Self::from_parts_unchecked(self.config, values, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridConfig {
        GridConfig::default()
    }

    #[test]
    fn eq1_examples() {
        let g = grid();
        assert_eq!(world_to_cell(WorldPoint::new(3.0, 3.0), &g).unwrap(), GridCell::new(32, 32));
        assert_eq!(world_to_cell(WorldPoint::new(1.5, 1.5), &g).unwrap(), GridCell::new(16, 16));
        assert_eq!(world_to_cell(WorldPoint::new(0.0, 0.0), &g).unwrap(), GridCell::new(1, 1));
    }

    #[test]
    fn out_of_room_points_clamp() {
        let g = grid();
        assert_eq!(world_to_cell(WorldPoint::new(-0.2, 3.4), &g).unwrap(), GridCell::new(1, 32));
        assert!(world_to_cell(WorldPoint::new(f64::NAN, 1.0), &g).is_err());
        assert!(world_to_cell(WorldPoint::new(1.0, f64::INFINITY), &g).is_err());
    }

    #[test]
    fn cell_centers() {
        let g = grid();
        let c1 = cell_center(GridCell::new(1, 1), &g).unwrap();
        assert!((c1.x - 3.0 / 64.0).abs() < 1e-15);
        let c32 = cell_center(GridCell::new(32, 1), &g).unwrap();
        assert!((c32.x - (3.0 - 3.0 / 64.0)).abs() < 1e-15);
        assert!(cell_center(GridCell::new(0, 1), &g).is_err());
        assert!(cell_center(GridCell::new(1, 33), &g).is_err());
    }

    #[test]
    fn center_round_trip_exhaustive() {
        let g = grid();
        for c in g.cells() {
            assert_eq!(world_to_cell(cell_center(c, &g).unwrap(), &g).unwrap(), c);
        }
        let odd = GridConfig::new(7, 13, -1.3, 2.9, 0.25, 4.0).unwrap();
        for c in odd.cells() {
            assert_eq!(world_to_cell(cell_center(c, &odd).unwrap(), &odd).unwrap(), c);
        }
    }

    #[test]
    fn distances() {
        let g = grid();
        let a = GridCell::new(5, 9);
        assert_eq!(cell_distance_m(a, a, &g).unwrap(), 0.0);
        let d = cell_distance_m(a, GridCell::new(6, 9), &g).unwrap();
        assert!((d - 0.09375).abs() < 1e-12);
        let far = cell_distance_m(GridCell::new(1, 1), GridCell::new(32, 32), &g).unwrap();
        let expected = 31.0 * (3.0 / 32.0) * 2f64.sqrt();
        assert!((far - expected).abs() < 1e-12);
        assert!(cell_distance_m(a, GridCell::new(33, 1), &g).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(GridConfig::new(32, 32, 3.0, 0.0, 0.0, 3.0).is_err());
        assert!(GridConfig::new(1, 32, 0.0, 3.0, 0.0, 3.0).is_err());
        assert!(GridConfig::new(32, 32, 0.0, 3.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn heatmap_validation() {
        let g = GridConfig::new(2, 2, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(HeatMap::new(&g, vec![0.0, 1.0, 2.0, f64::NAN]).is_err());
        assert!(HeatMap::new(&g, vec![0.0; 3]).is_err());
        assert!(HeatMap::new(&g, vec![-3.0, 1.0, 2.0, 5.0]).is_ok());
        assert!(HeatMap::normalized(&g, vec![0.0, 1.0 + 1e-10, -1e-10, 0.5]).is_ok());
        assert!(HeatMap::normalized(&g, vec![0.0, 1.0 + 1e-6, 0.0, 0.5]).is_err());
        let r = HeatMap::new(&g, vec![-1.0, 1.0, 3.0, 3.0]).unwrap().min_max_rescaled();
        assert_eq!(r.values(), &[0.0, 0.5, 1.0, 1.0]);
        let flat = HeatMap::new(&g, vec![2.0; 4]).unwrap().min_max_rescaled();
        assert_eq!(flat.values(), &[0.0; 4]);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn monotone_in_x_and_y(a in -0.5f64..3.5, b in -0.5f64..3.5, y in 0.0f64..3.0) {
            let g = GridConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ca = world_to_cell(WorldPoint::new(lo, y), &g).unwrap();
            let cb = world_to_cell(WorldPoint::new(hi, y), &g).unwrap();
            prop_assert!(ca.u <= cb.u);
            let ca = world_to_cell(WorldPoint::new(y, lo), &g).unwrap();
            let cb = world_to_cell(WorldPoint::new(y, hi), &g).unwrap();
            prop_assert!(ca.v <= cb.v);
        }

        #[test]
        fn translation_by_whole_cells(u in 3usize..=20, frac in 0.05f64..0.95, k in 1usize..10) {
            let g = GridConfig::default();
            let w = g.cell_width();
            let x = g.x_min + (u as f64 - 1.0 + frac) * w;
            let p = WorldPoint::new(x, 1.0);
            let q = WorldPoint::new(x + k as f64 * w, 1.0);
            let (cp, cq) = (world_to_cell(p, &g).unwrap(), world_to_cell(q, &g).unwrap());
            prop_assert_eq!(cq.u, cp.u + k);
            prop_assert_eq!(cq.v, cp.v);
        }
    }
}
