//! Seeded sampler of synthetic scenarios.
//!
//! The sampler follows the three-factor decomposition
//! `P(pans | positions, objects) · P(positions | objects) · P(objects)`:
//! objects are placed first, then people and their trajectories, then latent
//! attention targets and finally the head pans that follow them.
//!
//! A *blank object* sits at the camera cell. It can be gazed at like any
//! other object but never appears in [`Scenario::objects`], so the
//! ground-truth object heat-map carries no mass there.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{center_unchecked, GridCell, GridConfig, WorldPoint};
use crate::render::{wrap_angle, Frame, PersonState};

/// Consecutive rejections tolerated by every rejection loop.
pub const MAX_REDRAWS: usize = 100;

/// Relative weights of the four attention-target classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetWeights {
    pub objects: f64,
    pub people: f64,
    pub camera: f64,
    pub wander: f64,
}

impl Default for TargetWeights {
    fn default() -> Self {
        Self {
            objects: 0.60,
            people: 0.20,
            camera: 0.15,
            wander: 0.05,
        }
    }
}

impl TargetWeights {
    fn as_array(&self) -> [f64; 4] {
        [self.objects, self.people, self.camera, self.wander]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub grid: GridConfig,
    pub n_people: usize,
    pub n_objects: usize,
    /// Frames per scenario (`T`).
    pub horizon: usize,
    pub camera_cell: GridCell,
    pub seed: u64,
    /// Minimum distance between two objects (meters).
    pub d_obj_min: f64,
    /// Objects lie at most this far from the nearest wall (meters).
    pub d_edge_max: f64,
    /// Minimum distance between a person and any object or other person (meters).
    pub d_person_min: f64,
    /// Initial positions keep at least this distance from the walls (meters).
    pub d_person_edge_min: f64,
    pub p_stay: f64,
    /// Std-dev of a motion destination around the current position (meters).
    pub step_sigma: f64,
    pub speed_m_per_frame: f64,
    pub mean_hold_frames: f64,
    pub target_weights: TargetWeights,
    /// Fraction of the gaze shift carried out by the head (`α_h`).
    pub head_blend: f64,
    pub pan_noise_sigma: f64,
    /// Per-frame relaxation of the pan towards its goal (`λ`).
    pub relax_rate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            n_people: 2,
            n_objects: 3,
            horizon: 20,
            camera_cell: GridCell::new(16, 1),
            seed: 0,
            d_obj_min: 0.5,
            d_edge_max: 0.75,
            d_person_min: 0.3,
            d_person_edge_min: 0.4,
            p_stay: 0.95,
            step_sigma: 0.3,
            speed_m_per_frame: 0.1,
            mean_hold_frames: 25.0,
            target_weights: TargetWeights::default(),
            head_blend: 0.7,
            pan_noise_sigma: 5f64.to_radians(),
            relax_rate: 0.5,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.grid.check_cell(self.camera_cell)?;
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.n_people == 0 || self.horizon == 0 {
            return cfg_err(format!(
                "need at least one person and one frame, got N={} T={}",
                self.n_people, self.horizon
            ));
        }
        let positive = [
            ("d_obj_min", self.d_obj_min),
            ("d_edge_max", self.d_edge_max),
            ("d_person_min", self.d_person_min),
            ("d_person_edge_min", self.d_person_edge_min),
            ("step_sigma", self.step_sigma),
            ("speed_m_per_frame", self.speed_m_per_frame),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return cfg_err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_stay) || !(0.0..=1.0).contains(&self.head_blend) {
            return cfg_err("p_stay and head_blend must lie in [0, 1]".into());
        }
        if !(self.relax_rate > 0.0 && self.relax_rate <= 1.0) {
            return cfg_err(format!("relax_rate must lie in (0, 1], got {}", self.relax_rate));
        }
        if !(self.mean_hold_frames >= 1.0 && self.mean_hold_frames.is_finite()) {
            return cfg_err(format!("mean_hold_frames must be ≥ 1, got {}", self.mean_hold_frames));
        }
        if !(self.pan_noise_sigma >= 0.0 && self.pan_noise_sigma.is_finite()) {
            return cfg_err(format!("pan_noise_sigma must be ≥ 0, got {}", self.pan_noise_sigma));
        }
        let w = self.target_weights.as_array();
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return cfg_err(format!("target weights must be non-negative and sum to 1, got {w:?}"));
        }
        Ok(())
    }
}

/// What a person attends to during a frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Index into [`Scenario::objects`].
    Object(usize),
    /// Index of another person.
    Person(usize),
    /// The blank object at the camera cell.
    Camera,
    /// An absolute direction (radians).
    Wander(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridConfig,
    pub objects: Vec<GridCell>,
    pub camera_cell: GridCell,
    pub frames: Vec<Frame>,
    /// `targets[n][t]` is the attention target of person `n` at frame `t`.
    pub targets: Vec<Vec<Target>>,
    pub seed: u64,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn n_people(&self) -> usize {
        self.frames.first().map_or(0, |f| f.persons.len())
    }

    /// Positions of person `n` over time.
    pub fn trajectory(&self, n: usize) -> impl Iterator<Item = WorldPoint> + '_ {
        self.frames.iter().map(move |f| f.persons[n].position)
    }

    /// Re-checks the structural invariants against the thresholds of `gc`.
    pub fn check_invariants(&self, gc: &GenConfig) -> Result<()> {
        let g = &self.grid;
        let fail = |m: String| Err(Error::Generation(m));
        if self.objects.contains(&self.camera_cell) {
            return fail("camera cell listed among objects".into());
        }
        for (i, &a) in self.objects.iter().enumerate() {
            g.check_cell(a)?;
            let ca = center_unchecked(a, g);
            if g.distance_to_boundary(ca) > gc.d_edge_max + 1e-12 {
                return fail(format!("object {i} too far from the walls"));
            }
            for (j, &b) in self.objects.iter().enumerate().skip(i + 1) {
                if ca.distance(center_unchecked(b, g)) < gc.d_obj_min {
                    return fail(format!("objects {i} and {j} closer than {}", gc.d_obj_min));
                }
            }
        }
        let n = self.n_people();
        if self.targets.len() != n {
            return fail("target table does not match the number of people".into());
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.persons.len() != n {
                return fail(format!("frame {t} has {} people, expected {n}", f.persons.len()));
            }
            for p in &f.persons {
                if !p.position.is_finite() || !g.in_bounds(p.position) {
                    return fail(format!("frame {t}: person out of bounds at {:?}", p.position));
                }
                if !(p.pan > -PI && p.pan <= PI) {
                    return fail(format!("frame {t}: pan {} not wrapped", p.pan));
                }
            }
        }
        Ok(())
    }
}

/// Objects plus the blank object, as world points.
fn gazeable_points(objects: &[GridCell], camera: GridCell, g: &GridConfig) -> Vec<WorldPoint> {
    objects
        .iter()
        .chain(std::iter::once(&camera))
        .map(|&c| center_unchecked(c, g))
        .collect()
}

/// Draws `n_objects` cells uniformly, rejecting cells too close to an earlier
/// object or to the blank object, and cells too far from every wall.
pub fn sample_objects(gc: &GenConfig, rng: &mut impl Rng) -> Result<Vec<GridCell>> {
    let g = &gc.grid;
    let camera = center_unchecked(gc.camera_cell, g);
    let mut placed: Vec<GridCell> = Vec::with_capacity(gc.n_objects);
    for m in 0..gc.n_objects {
        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let c = GridCell::new(rng.random_range(1..=g.s_u), rng.random_range(1..=g.s_v));
            let p = center_unchecked(c, g);
            let near_edge = g.distance_to_boundary(p) <= gc.d_edge_max;
            let separated = p.distance(camera) >= gc.d_obj_min
                && placed.iter().all(|&o| p.distance(center_unchecked(o, g)) >= gc.d_obj_min);
            if near_edge && separated {
                accepted = Some(c);
                break;
            }
        }
        match accepted {
            Some(c) => placed.push(c),
            None => {
                return Err(Error::Generation(format!(
                    "could not place object {m} after {MAX_REDRAWS} draws"
                )))
            }
        }
    }
    Ok(placed)
}

/// Uniform initial positions away from the walls, the objects (blank included)
/// and each other.
pub fn sample_initial_people(gc: &GenConfig, objects: &[GridCell], rng: &mut impl Rng) -> Result<Vec<WorldPoint>> {
    let g = &gc.grid;
    let anchors = gazeable_points(objects, gc.camera_cell, g);
    let mut people: Vec<WorldPoint> = Vec::with_capacity(gc.n_people);
    for n in 0..gc.n_people {
        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let p = WorldPoint::new(
                rng.random_range(g.x_min..=g.x_max),
                rng.random_range(g.y_min..=g.y_max),
            );
            let ok = g.distance_to_boundary(p) >= gc.d_person_edge_min
                && anchors.iter().chain(&people).all(|q| p.distance(*q) >= gc.d_person_min);
            if ok {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => people.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "could not place person {n} after {MAX_REDRAWS} draws"
                )))
            }
        }
    }
    Ok(people)
}

/// Positions of every person plus any in-flight linear moves.
#[derive(Clone, Debug)]
pub struct MotionState {
    pub positions: Vec<WorldPoint>,
    /// Remaining waypoints of each person's current move, nearest last.
    pending: Vec<Vec<WorldPoint>>,
}

impl MotionState {
    pub fn new(positions: Vec<WorldPoint>) -> Self {
        let pending = vec![Vec::new(); positions.len()];
        Self { positions, pending }
    }

    pub fn is_moving(&self, n: usize) -> bool {
        !self.pending[n].is_empty()
    }
}

/// Waypoints `x + (k/τ)(dest − x)` for `k = 1..=τ`, `τ = ⌈|dest − x| / speed⌉`.
pub fn interpolate_move(from: WorldPoint, dest: WorldPoint, speed: f64) -> Vec<WorldPoint> {
    let tau = (from.distance(dest) / speed).ceil().max(1.0) as usize;
    (1..=tau)
        .map(|k| {
            let a = k as f64 / tau as f64;
            WorldPoint::new(from.x + a * (dest.x - from.x), from.y + a * (dest.y - from.y))
        })
        .collect()
}

/// Advances every person by one frame.
///
/// A person in the middle of a move takes the next waypoint. Otherwise they
/// stay with probability `p_stay`, or draw a destination around their current
/// position (redrawn while outside the room or too close to an object or
/// another person) and start moving towards it. If no destination is accepted
/// within [`MAX_REDRAWS`] draws the person stays.
pub fn step_motion(state: &mut MotionState, gc: &GenConfig, objects: &[GridCell], rng: &mut impl Rng) -> Result<()> {
    let g = &gc.grid;
    let anchors = gazeable_points(objects, gc.camera_cell, g);
    let step = Normal::new(0.0, gc.step_sigma).map_err(|e| invalid(e.to_string()))?;
    for n in 0..state.positions.len() {
        if let Some(next) = state.pending[n].pop() {
            state.positions[n] = next;
            continue;
        }
        if rng.random::<f64>() < gc.p_stay {
            continue;
        }
        let here = state.positions[n];
        for _ in 0..MAX_REDRAWS {
            let dest = WorldPoint::new(here.x + step.sample(rng), here.y + step.sample(rng));
            let ok = g.in_bounds(dest)
                && anchors.iter().all(|q| dest.distance(*q) >= gc.d_person_min)
                && state
                    .positions
                    .iter()
                    .enumerate()
                    .all(|(k, q)| k == n || dest.distance(*q) >= gc.d_person_min);
            if ok {
                let mut path = interpolate_move(here, dest, gc.speed_m_per_frame);
                path.reverse();
                state.positions[n] = path.pop().expect("a move has at least one waypoint");
                state.pending[n] = path;
                break;
            }
        }
    }
    Ok(())
}

/// Samples a hold duration `k ≥ 1` with `P(k) = p(1 − p)^{k−1}`, `p = 1/mean`.
pub fn sample_hold(mean: f64, rng: &mut impl Rng) -> Result<usize> {
    if mean <= 1.0 {
        return Ok(1);
    }
    let geo = Geometric::new(1.0 / mean).map_err(|e| invalid(e.to_string()))?;
    Ok(1 + geo.sample(rng) as usize)
}

fn draw_target(gc: &GenConfig, person: usize, n_people: usize, n_objects: usize, rng: &mut impl Rng) -> Target {
    let mut w = gc.target_weights.as_array();
    if n_objects == 0 {
        w[0] = 0.0;
    }
    if n_people < 2 {
        w[1] = 0.0;
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Target::Wander(rng.random_range(-PI..PI));
    }
    let mut r = rng.random::<f64>() * total;
    let mut class = 3;
    for (i, &wi) in w.iter().enumerate() {
        if wi > 0.0 && r < wi {
            class = i;
            break;
        }
        r -= wi;
    }
    match class {
        0 => Target::Object(rng.random_range(0..n_objects)),
        1 => {
            let k = rng.random_range(0..n_people - 1);
            Target::Person(if k >= person { k + 1 } else { k })
        }
        2 => Target::Camera,
        _ => Target::Wander(wrap_angle(rng.random_range(-PI..PI))),
    }
}

/// Semi-Markov attention chains, one per person: hold a target for a
/// geometric number of frames, then draw a class by weight (classes without
/// members are dropped) and a member uniformly within it.
pub fn sample_attention_targets(gc: &GenConfig, n_people: usize, n_objects: usize, rng: &mut impl Rng) -> Result<Vec<Vec<Target>>> {
    let mut out = Vec::with_capacity(n_people);
    for n in 0..n_people {
        let mut seq = Vec::with_capacity(gc.horizon);
        while seq.len() < gc.horizon {
            let target = draw_target(gc, n, n_people, n_objects, rng);
            let hold = sample_hold(gc.mean_hold_frames, rng)?;
            let take = hold.min(gc.horizon - seq.len());
            seq.extend(std::iter::repeat_n(target, take));
        }
        out.push(seq);
    }
    Ok(out)
}

/// Head goal: the head covers a fraction `α_h` of the shortest arc from
/// `anchor` (the pan when the current target was chosen) to the gaze direction.
pub fn blended_goal(anchor: f64, gaze_dir: f64, head_blend: f64) -> f64 {
    wrap_angle(anchor + head_blend * wrap_angle(gaze_dir - anchor))
}

/// `pan = wrap(prev + λ·wrap(goal − prev) + ξ)`, `ξ ~ N(0, pan_noise_sigma²)`.
pub fn head_pan_step(prev_pan: f64, goal: f64, gc: &GenConfig, rng: &mut impl Rng) -> f64 {
    let noise = if gc.pan_noise_sigma > 0.0 {
        Normal::new(0.0, gc.pan_noise_sigma).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    };
    wrap_angle(prev_pan + gc.relax_rate * wrap_angle(goal - prev_pan) + noise)
}

fn target_direction(
    target: Target,
    n: usize,
    positions: &[WorldPoint],
    objects: &[GridCell],
    gc: &GenConfig,
) -> f64 {
    let here = positions[n];
    let there = match target {
        Target::Object(m) => center_unchecked(objects[m], &gc.grid),
        Target::Person(k) => positions[k],
        Target::Camera => center_unchecked(gc.camera_cell, &gc.grid),
        Target::Wander(dir) => return dir,
    };
    here.bearing_to(there)
}

/// Samples one scenario with the RNG seeded by `gc.seed`.
pub fn generate_scenario(gc: &GenConfig) -> Result<Scenario> {
    gc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let objects = sample_objects(gc, &mut rng)?;
    let initial = sample_initial_people(gc, &objects, &mut rng)?;

    let mut motion = MotionState::new(initial);
    let mut trajectory = Vec::with_capacity(gc.horizon);
    trajectory.push(motion.positions.clone());
    for _ in 1..gc.horizon {
        step_motion(&mut motion, gc, &objects, &mut rng)?;
        trajectory.push(motion.positions.clone());
    }

    let targets = sample_attention_targets(gc, gc.n_people, objects.len(), &mut rng)?;

    let n_people = gc.n_people;
    let mut pans = vec![vec![0.0; n_people]; gc.horizon];
    for n in 0..n_people {
        let first = target_direction(targets[n][0], n, &trajectory[0], &objects, gc);
        let mut anchor = wrap_angle(first);
        pans[0][n] = head_pan_step(anchor, anchor, gc, &mut rng);
        for t in 1..gc.horizon {
            let prev = pans[t - 1][n];
            if targets[n][t] != targets[n][t - 1] {
                anchor = prev;
            }
            let gaze = target_direction(targets[n][t], n, &trajectory[t], &objects, gc);
            pans[t][n] = head_pan_step(prev, blended_goal(anchor, gaze, gc.head_blend), gc, &mut rng);
        }
    }

    let frames = trajectory
        .into_iter()
        .zip(pans)
        .map(|(pos, pan)| Frame::new(pos.into_iter().zip(pan).map(|(x, a)| PersonState::new(x, a)).collect()))
        .collect();
    Ok(Scenario {
        grid: gc.grid,
        objects,
        camera_cell: gc.camera_cell,
        frames,
        targets,
        seed: gc.seed,
    })
}

/// SplitMix64 finaliser over `(base, index)`: per-item seeds for datasets.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scenario counts drawn per item of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMix {
    pub people: RangeInclusive<usize>,
    pub objects: RangeInclusive<usize>,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        Self {
            people: 2..=2,
            objects: 1..=3,
        }
    }
}

/// Attempts per dataset item before a generation failure is reported.
const ITEM_ATTEMPTS: u64 = 8;

/// Item `index` of the dataset rooted at `base.seed`: draws `N` and `M` from
/// `mix`, then generates with a derived seed. Generation failures are retried
/// with further derived seeds, so the result depends only on the inputs.
pub fn generate_indexed(base: &GenConfig, mix: &ScenarioMix, index: u64) -> Result<Scenario> {
    if mix.people.is_empty() || mix.objects.is_empty() || *mix.people.start() == 0 {
        return Err(Error::Config(format!("invalid scenario mix {mix:?}")));
    }
    let item_seed = derive_seed(base.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
    let mut gc = base.clone();
    gc.n_people = rng.random_range(mix.people.clone());
    gc.n_objects = rng.random_range(mix.objects.clone());
    let mut last_err = None;
    for attempt in 0..ITEM_ATTEMPTS {
        gc.seed = derive_seed(item_seed, attempt);
        match generate_scenario(&gc) {
            Ok(s) => return Ok(s),
            Err(e @ Error::Generation(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}
