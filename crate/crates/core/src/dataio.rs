//! File formats: scenarios, track recordings, heat-maps, metrics and loss logs.
//!
//! Text formats are line oriented. Floating-point values are written with the
//! shortest representation that parses back to the same `f64`, so text
//! round-trips are lossless.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use gazefollow_tensor::{Checkpoint, Tensor};

use crate::error::{invalid, Error, Result};
use crate::eval::EvalReport;
use crate::grid::{GridCell, GridConfig, HeatMap, WorldPoint};
use crate::render::{wrap_angle, Frame, PersonState};
use crate::simgen::{Scenario, Target};

pub const SCENARIO_MAGIC: &str = "gazefollow-scenario";
pub const SCENARIO_VERSION: u32 = 1;
pub const TRACKS_MAGIC: &str = "gazefollow-tracks";
pub const TRACKS_VERSION: u32 = 1;
pub const HEATMAP_CONTAINER: &str = "heatmap";
pub const METRICS_HEADER: [&str; 11] = [
    "method",
    "dataset",
    "mse_x100",
    "precision",
    "recall",
    "f1",
    "tp",
    "fp",
    "fn",
    "n_sequences",
    "seed",
];

/// Line-by-line reader that turns failures into [`Error::Parse`].
struct Lines<'a> {
    origin: &'a str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a str) -> Self {
        Self {
            origin,
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next line that is neither blank nor a `#` comment.
    fn next_content(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        match self.next_content() {
            Some(l) => Ok(l),
            None => {
                self.line += 1;
                Err(self.err(format!("unexpected end of file, expected {what}")))
            }
        }
    }

    /// Reads `keyword v1 v2 ...` and returns the values.
    fn keyed(&mut self, keyword: &str, count: usize) -> Result<Vec<&'a str>> {
        let l = self.expect(keyword)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected '{keyword}', found '{l}'")));
        }
        let vals: Vec<&str> = parts.collect();
        if vals.len() != count {
            return Err(self.err(format!("'{keyword}' takes {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn num<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid {what} '{s}'")))
    }

    fn finite(&self, s: &str, what: &str) -> Result<f64> {
        let v: f64 = self.num(s, what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("{what} must be finite, found '{s}'")))
        }
    }

    fn header(&mut self, magic: &str, version: u32) -> Result<()> {
        let v = self.keyed(magic, 1)?;
        let found: u32 = self.num(v[0], "version")?;
        if found != version {
            return Err(self.err(format!("unsupported {magic} version {found}")));
        }
        Ok(())
    }

    fn grid(&mut self) -> Result<GridConfig> {
        let v = self.keyed("grid", 6)?;
        let g = GridConfig {
            s_u: self.num(v[0], "s_u")?,
            s_v: self.num(v[1], "s_v")?,
            x_min: self.finite(v[2], "x_min")?,
            x_max: self.finite(v[3], "x_max")?,
            y_min: self.finite(v[4], "y_min")?,
            y_max: self.finite(v[5], "y_max")?,
        };
        g.validate().map_err(|e| self.err(e.to_string()))?;
        Ok(g)
    }

    fn cell(&self, u: &str, v: &str, g: &GridConfig) -> Result<GridCell> {
        let c = GridCell::new(self.num(u, "u")?, self.num(v, "v")?);
        g.check_cell(c).map_err(|e| self.err(e.to_string()))?;
        Ok(c)
    }
}

fn grid_line(g: &GridConfig) -> String {
    format!("grid {} {} {} {} {} {}", g.s_u, g.s_v, g.x_min, g.x_max, g.y_min, g.y_max)
}

fn origin_of(path: &Path) -> String {
    path.display().to_string()
}

fn target_token(t: &Target) -> String {
    match t {
        Target::Object(m) => format!("o{m}"),
        Target::Person(k) => format!("p{k}"),
        Target::Camera => "cam".to_string(),
        Target::Wander(a) => format!("w:{a}"),
    }
}

fn parse_target(tok: &str) -> Option<Target> {
    if tok == "cam" {
        Some(Target::Camera)
    } else if let Some(a) = tok.strip_prefix("w:") {
        a.parse().ok().filter(|v: &f64| v.is_finite()).map(Target::Wander)
    } else if let Some(m) = tok.strip_prefix('o') {
        m.parse().ok().map(Target::Object)
    } else if let Some(k) = tok.strip_prefix('p') {
        k.parse().ok().map(Target::Person)
    } else {
        None
    }
}

/// Serialises a scenario:
///
/// ```text
/// gazefollow-scenario 1
/// grid <s_u> <s_v> <x_min> <x_max> <y_min> <y_max>
/// seed <u64>
/// camera <u> <v>
/// objects <M>
/// object <u> <v>                          (M lines)
/// people <N>
/// frames <T>
/// state <t> <n> <x> <y> <pan> <target>    (T·N lines, t-major)
/// ```
///
/// Targets are `o<m>` (object), `p<k>` (person), `cam` or `w:<radians>`.
pub fn scenario_to_string(s: &Scenario) -> String {
    let mut out = String::new();
    let n = s.n_people();
    // Writing into a String cannot fail.
    let _ = writeln!(out, "{SCENARIO_MAGIC} {SCENARIO_VERSION}");
    let _ = writeln!(out, "{}", grid_line(&s.grid));
    let _ = writeln!(out, "seed {}", s.seed);
    let _ = writeln!(out, "camera {} {}", s.camera_cell.u, s.camera_cell.v);
    let _ = writeln!(out, "objects {}", s.objects.len());
    for o in &s.objects {
        let _ = writeln!(out, "object {} {}", o.u, o.v);
    }
    let _ = writeln!(out, "people {n}");
    let _ = writeln!(out, "frames {}", s.frames.len());
    for (t, f) in s.frames.iter().enumerate() {
        for (k, p) in f.persons.iter().enumerate() {
            let _ = writeln!(
                out,
                "state {t} {k} {} {} {} {}",
                p.position.x,
                p.position.y,
                p.pan,
                target_token(&s.targets[k][t])
            );
        }
    }
    out
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let mut r = Lines::new(text, origin);
    r.header(SCENARIO_MAGIC, SCENARIO_VERSION)?;
    let grid = r.grid()?;
    let seed: u64 = {
        let v = r.keyed("seed", 1)?;
        r.num(v[0], "seed")?
    };
    let camera_cell = {
        let v = r.keyed("camera", 2)?;
        r.cell(v[0], v[1], &grid)?
    };
    let m: usize = {
        let v = r.keyed("objects", 1)?;
        r.num(v[0], "object count")?
    };
    let mut objects = Vec::with_capacity(m.min(1024));
    for _ in 0..m {
        let v = r.keyed("object", 2)?;
        objects.push(r.cell(v[0], v[1], &grid)?);
    }
    let n: usize = {
        let v = r.keyed("people", 1)?;
        r.num(v[0], "people count")?
    };
    let t_len: usize = {
        let v = r.keyed("frames", 1)?;
        r.num(v[0], "frame count")?
    };
    let mut frames = Vec::with_capacity(t_len.min(1 << 16));
    let mut targets = vec![Vec::with_capacity(t_len.min(1 << 16)); n];
    for t in 0..t_len {
        let mut persons = Vec::with_capacity(n);
        for k in 0..n {
            let v = r.keyed("state", 6)?;
            let (tt, kk): (usize, usize) = (r.num(v[0], "frame")?, r.num(v[1], "person")?);
            if (tt, kk) != (t, k) {
                return Err(r.err(format!("expected state for frame {t} person {k}, found {tt} {kk}")));
            }
            let pos = WorldPoint::new(r.finite(v[2], "x")?, r.finite(v[3], "y")?);
            let pan = r.finite(v[4], "pan")?;
            let target = parse_target(v[5]).ok_or_else(|| r.err(format!("invalid target '{}'", v[5])))?;
            match target {
                Target::Object(i) if i >= m => return Err(r.err(format!("target object {i} does not exist"))),
                Target::Person(i) if i >= n || i == k => {
                    return Err(r.err(format!("person {k} cannot target person {i}")))
                }
                _ => {}
            }
            persons.push(PersonState { position: pos, pan });
            targets[k].push(target);
        }
        frames.push(Frame::new(persons));
    }
    if let Some(extra) = r.next_content() {
        return Err(r.err(format!("unexpected trailing content '{extra}'")));
    }
    Ok(Scenario {
        grid,
        objects,
        camera_cell,
        frames,
        targets,
        seed,
    })
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scenario_to_string(s))?;
    Ok(())
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    parse_scenario(&fs::read_to_string(path)?, &origin_of(path))
}

/// A recording of head positions and pans, e.g. exported from a tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackRecording {
    pub grid: GridConfig,
    pub fps: f64,
    pub camera_cell: GridCell,
    /// Annotated objects of interest, if known.
    pub objects: Vec<GridCell>,
    /// Index of the first frame in the file.
    pub first_frame: u64,
    /// One entry per frame from `first_frame` to the last frame in the file.
    pub frames: Vec<Frame>,
    /// Person identifiers of each frame, parallel to `frames[t].persons`.
    pub ids: Vec<Vec<u64>>,
}

/// Start/end frame indices of length-`horizon` windows with 50% overlap
/// (stride `⌈horizon / 2⌉`); a trailing window shorter than `horizon` is dropped.
pub fn sliding_windows(len: usize, horizon: usize) -> Vec<Range<usize>> {
    if horizon == 0 || len < horizon {
        return Vec::new();
    }
    let stride = horizon.div_ceil(2);
    (0..=len - horizon).step_by(stride).map(|s| s..s + horizon).collect()
}

impl TrackRecording {
    pub fn windows(&self, horizon: usize) -> Vec<&[Frame]> {
        sliding_windows(self.frames.len(), horizon)
            .into_iter()
            .map(|r| &self.frames[r])
            .collect()
    }
}

/// Parses a track file:
///
/// ```text
/// gazefollow-tracks 1
/// grid <s_u> <s_v> <x_min> <x_max> <y_min> <y_max>
/// fps <rate>
/// camera <u> <v>
/// object <u> <v>          (zero or more)
/// t,person,x,y,pan
/// <t>,<id>,<x>,<y>,<pan>  (sorted by (t, id))
/// ```
///
/// Blank lines and `#` comments are ignored. Pans are wrapped into `(−π, π]`.
/// Every person must appear in each frame between their first and last row.
pub fn parse_tracks(text: &str, origin: &str) -> Result<TrackRecording> {
    let mut r = Lines::new(text, origin);
    r.header(TRACKS_MAGIC, TRACKS_VERSION)?;
    let grid = r.grid()?;
    let fps = {
        let v = r.keyed("fps", 1)?;
        let f = r.finite(v[0], "fps")?;
        if f <= 0.0 {
            return Err(r.err("fps must be positive"));
        }
        f
    };
    let camera_cell = {
        let v = r.keyed("camera", 2)?;
        r.cell(v[0], v[1], &grid)?
    };
    let mut objects = Vec::new();
    let header = loop {
        let l = r.expect("column header")?;
        match l.strip_prefix("object ") {
            Some(rest) => {
                let v: Vec<&str> = rest.split_whitespace().collect();
                if v.len() != 2 {
                    return Err(r.err("'object' takes 2 values"));
                }
                objects.push(r.cell(v[0], v[1], &grid)?);
            }
            None => break l,
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "person", "x", "y", "pan"] {
        return Err(r.err(format!("expected header 't,person,x,y,pan', found '{header}'")));
    }

    let mut rows: Vec<(u64, u64, PersonState)> = Vec::new();
    while let Some(l) = r.next_content() {
        let v: Vec<&str> = l.split(',').map(str::trim).collect();
        if v.len() != 5 {
            return Err(r.err(format!("expected 5 fields, found {}", v.len())));
        }
        let t: u64 = r.num(v[0], "frame")?;
        let id: u64 = r.num(v[1], "person id")?;
        let pos = WorldPoint::new(r.finite(v[2], "x")?, r.finite(v[3], "y")?);
        let pan = wrap_angle(r.finite(v[4], "pan")?);
        if let Some(&(pt, pid, _)) = rows.last() {
            if (t, id) <= (pt, pid) {
                return Err(r.err(format!("rows must be sorted by (t, person); ({t}, {id}) follows ({pt}, {pid})")));
            }
        }
        rows.push((t, id, PersonState { position: pos, pan }));
    }
    if rows.is_empty() {
        return Err(r.err("track file has no rows"));
    }

    let first = rows[0].0;
    let last = rows.last().map(|x| x.0).unwrap_or(first);
    let n_frames = (last - first + 1) as usize;
    let mut frames = vec![Frame::default(); n_frames];
    let mut ids = vec![Vec::new(); n_frames];
    let mut last_seen: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
    for (t, id, p) in rows {
        if let Some(prev) = last_seen.insert(id, t) {
            if t != prev + 1 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 0,
                    msg: format!("person {id} is missing between frames {prev} and {t}"),
                });
            }
        }
        let i = (t - first) as usize;
        frames[i].persons.push(p);
        ids[i].push(id);
    }
    Ok(TrackRecording {
        grid,
        fps,
        camera_cell,
        objects,
        first_frame: first,
        frames,
        ids,
    })
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<TrackRecording> {
    let path = path.as_ref();
    parse_tracks(&fs::read_to_string(path)?, &origin_of(path))
}

pub fn tracks_to_string(rec: &TrackRecording) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRACKS_MAGIC} {TRACKS_VERSION}");
    let _ = writeln!(out, "{}", grid_line(&rec.grid));
    let _ = writeln!(out, "fps {}", rec.fps);
    let _ = writeln!(out, "camera {} {}", rec.camera_cell.u, rec.camera_cell.v);
    for o in &rec.objects {
        let _ = writeln!(out, "object {} {}", o.u, o.v);
    }
    let _ = writeln!(out, "t,person,x,y,pan");
    for (i, (f, ids)) in rec.frames.iter().zip(&rec.ids).enumerate() {
        let mut rows: Vec<(u64, &PersonState)> = ids.iter().copied().zip(&f.persons).collect();
        rows.sort_by_key(|r| r.0);
        for (id, p) in rows {
            let _ = writeln!(
                out,
                "{},{id},{},{},{}",
                rec.first_frame + i as u64,
                p.position.x,
                p.position.y,
                p.pan
            );
        }
    }
    out
}

pub fn write_tracks(rec: &TrackRecording, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tracks_to_string(rec))?;
    Ok(())
}

/// A scenario viewed as a track recording (person ids are indices).
pub fn scenario_tracks(s: &Scenario, fps: f64) -> TrackRecording {
    TrackRecording {
        grid: s.grid,
        fps,
        camera_cell: s.camera_cell,
        objects: s.objects.clone(),
        first_frame: 0,
        frames: s.frames.clone(),
        ids: s.frames.iter().map(|f| (0..f.persons.len() as u64).collect()).collect(),
    }
}

/// 16-bit binary PGM (`P5`, maxval 65535, big-endian samples). The image is
/// `s_u` wide and `s_v` high; the top row is `v = s_v` so +y points up.
/// Each sample is `round(65535 · clamp(value, 0, 1))`.
pub fn heatmap_pgm_bytes(m: &HeatMap) -> Vec<u8> {
    let g = m.config();
    let mut out = format!("P5\n{} {}\n65535\n", g.s_u, g.s_v).into_bytes();
    for v in (1..=g.s_v).rev() {
        for u in 1..=g.s_u {
            let x = m.get(GridCell::new(u, v)).clamp(0.0, 1.0);
            let q = (65535.0 * x).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

pub fn write_heatmap_pgm(m: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, heatmap_pgm_bytes(m))?;
    Ok(())
}

/// Lossless heat-map file: a tensor checkpoint named `heatmap` holding
/// `values` `[s_u, s_v]`, `bounds` `[x_min, x_max, y_min, y_max]` and
/// `normalized` `[0 or 1]`.
pub fn heatmap_checkpoint(m: &HeatMap) -> Checkpoint {
    let g = m.config();
    let mut ck = Checkpoint::new(HEATMAP_CONTAINER);
    ck.push("values", Tensor::new(&[g.s_u, g.s_v], m.values().to_vec()).expect("grid-sized values"));
    ck.push(
        "bounds",
        Tensor::new(&[4], vec![g.x_min, g.x_max, g.y_min, g.y_max]).expect("four bounds"),
    );
    ck.push("normalized", Tensor::scalar(if m.is_normalized() { 1.0 } else { 0.0 }));
    ck
}

pub fn heatmap_from_checkpoint(ck: &Checkpoint) -> Result<HeatMap> {
    if ck.name != HEATMAP_CONTAINER {
        return Err(invalid(format!("expected a '{HEATMAP_CONTAINER}' container, found '{}'", ck.name)));
    }
    let get = |n: &str| ck.get(n).ok_or_else(|| invalid(format!("heat-map file lacks '{n}'")));
    let values = get("values")?;
    let bounds = get("bounds")?.data();
    if values.rank() != 2 || bounds.len() != 4 {
        return Err(invalid("malformed heat-map tensors"));
    }
    let g = GridConfig::new(
        values.shape()[0],
        values.shape()[1],
        bounds[0],
        bounds[1],
        bounds[2],
        bounds[3],
    )?;
    if get("normalized")?.data()[0] != 0.0 {
        HeatMap::normalized(&g, values.data().to_vec())
    } else {
        HeatMap::new(&g, values.data().to_vec())
    }
}

pub fn write_heatmap_raw(m: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    Ok(heatmap_checkpoint(m).save(path)?)
}

pub fn read_heatmap_raw(path: impl AsRef<Path>) -> Result<HeatMap> {
    heatmap_from_checkpoint(&Checkpoint::load(path)?)
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Metrics table, one row per report. Precision, recall and f1 are
/// percentages; `mse_x100` is the mean heat-map MSE × 100 (empty when the
/// method has no heat-map).
pub fn metrics_to_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(METRICS_HEADER).map_err(io)?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.dataset.clone(),
            r.mse.map(|m| format!("{:.3}", 100.0 * m)).unwrap_or_default(),
            pct(r.precision),
            pct(r.recall),
            pct(r.f1),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.n_sequences().to_string(),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

pub fn write_metrics(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, metrics_to_csv(reports)?)?;
    Ok(())
}

/// `step<TAB>loss` table with a header line.
pub fn write_loss_log(log: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "step\tloss")?;
    for (i, l) in log.iter().enumerate() {
        writeln!(w, "{i}\t{l}")?;
    }
    w.flush()?;
    Ok(())
}
