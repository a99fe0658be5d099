//! Reproducible experiment runs: configuration, dataset assembly, training,
//! evaluation and the run manifest. The `gazefollow` binary is a thin layer
//! over these functions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{self, TrackRecording};
use crate::error::{invalid, Error, Result};
use crate::eval::{compute_metrics, heatmap_mse, match_detections, EvalReport, SequenceScore, DEFAULT_MATCH_THRESHOLD_M};
use crate::grid::GridCell;
use crate::models::{
    heuristic, predict_batch, train_with_progress, DataSource, ModelKind, ModelSpec, Sample, SequenceInput,
    SyntheticSource, TrainConfig, TrainedModel,
};
use crate::peaks::{extract_peaks, PeakConfig};
use crate::render::{object_heatmap, DEFAULT_SIGMA_OMEGA};
use crate::simgen::{generate_indexed, GenConfig, Scenario, ScenarioMix};

/// Every constant of a run. Loadable from TOML; missing keys take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Grid, horizon `T` and generator parameters; `generator.seed` roots the
    /// training stream.
    pub generator: GenConfig,
    /// Ranges for the number of people and objects per scenario.
    pub mix: ScenarioMix,
    /// Cone half-aperture in degrees.
    pub epsilon_deg: f64,
    /// Object peak spread in cells.
    pub sigma_omega: f64,
    pub peaks: PeakConfig,
    pub match_threshold_m: f64,
    pub train: TrainConfig,
    pub test_count: usize,
    /// Roots the test stream; must differ from `generator.seed`.
    pub test_seed: u64,
    /// One training run per seed (parameter initialisation).
    pub model_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GenConfig { seed: 1, ..GenConfig::default() },
            mix: ScenarioMix::default(),
            epsilon_deg: 2.0,
            sigma_omega: DEFAULT_SIGMA_OMEGA,
            peaks: PeakConfig::default(),
            match_threshold_m: DEFAULT_MATCH_THRESHOLD_M,
            train: TrainConfig::default(),
            test_count: 500,
            test_seed: 2,
            model_seeds: vec![0, 1, 2],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.peaks.validate()?;
        let cfg_err = |m: String| Err(Error::Config(m));
        if !(self.epsilon_deg > 0.0 && self.epsilon_deg < 90.0) {
            return cfg_err(format!("epsilon_deg must lie in (0, 90), got {}", self.epsilon_deg));
        }
        if !(self.sigma_omega > 0.0 && self.match_threshold_m > 0.0) {
            return cfg_err("sigma_omega and match_threshold_m must be positive".into());
        }
        if self.mix.people.is_empty() || *self.mix.people.start() == 0 || self.mix.objects.is_empty() {
            return cfg_err(format!("invalid people/object ranges {:?}", self.mix));
        }
        if self.test_seed == self.generator.seed {
            return cfg_err("test_seed must differ from the training seed".into());
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_deg.to_radians()
    }

    pub fn horizon(&self) -> usize {
        self.generator.horizon
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file, or the configuration recorded in a `.json` manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = Manifest::load(path)?.config;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn training_source(&self) -> SyntheticSource {
        SyntheticSource {
            gen: self.generator.clone(),
            mix: self.mix.clone(),
            epsilon: self.epsilon(),
            sigma_omega: self.sigma_omega,
        }
    }

    pub fn test_generator(&self) -> GenConfig {
        GenConfig { seed: self.test_seed, ..self.generator.clone() }
    }

    pub fn spec(&self, kind: ModelKind, seed: u64) -> ModelSpec {
        ModelSpec::new(kind, &self.generator.grid, self.horizon(), seed)
    }
}

/// Scenarios `0..count` of the stream rooted at `gen.seed`.
pub fn generate_scenarios(gen: &GenConfig, mix: &ScenarioMix, count: usize) -> Result<Vec<Scenario>> {
    (0..count as u64).map(|i| generate_indexed(gen, mix, i)).collect()
}

/// The fixed synthetic test set of a configuration.
pub fn synthetic_test_set(cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    generate_scenarios(&cfg.test_generator(), &cfg.mix, cfg.test_count)?
        .iter()
        .map(|s| Sample::from_scenario(s, cfg.epsilon(), cfg.sigma_omega))
        .collect()
}

/// Samples from every length-`horizon` window of a recording. The recording
/// must list its objects for the windows to be scorable.
pub fn track_samples(rec: &TrackRecording, horizon: usize, epsilon: f64, sigma_omega: f64) -> Result<Vec<Sample>> {
    let omega = object_heatmap(&rec.objects, &rec.grid, sigma_omega)?;
    rec.windows(horizon)
        .into_iter()
        .map(|frames| {
            Ok(Sample {
                input: SequenceInput::from_frames(frames, &rec.grid, epsilon)?,
                objects: rec.objects.clone(),
                omega: omega.clone(),
            })
        })
        .collect()
}

/// Batch size used for inference.
const EVAL_BATCH: usize = 16;

/// Detects objects on every sample and scores them. The MSE column is filled
/// for learned models only.
pub fn evaluate_model(
    model: &TrainedModel,
    samples: &[Sample],
    pc: &PeakConfig,
    threshold_m: f64,
    dataset: &str,
) -> Result<EvalReport> {
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let inputs: Vec<&SequenceInput> = chunk.iter().map(|s| &s.input).collect();
        let preds = predict_batch(model, &inputs)?;
        for (pred, s) in preds.iter().zip(chunk) {
            let dets = extract_peaks(pred, pc);
            let m = match_detections(&dets, &s.objects, s.omega.config(), threshold_m)?;
            let mse = if model.spec.kind.is_heuristic() { None } else { Some(heatmap_mse(pred, &s.omega)?) };
            scores.push(SequenceScore { counts: m.counts(), mse });
        }
    }
    Ok(compute_metrics(model.spec.kind.name(), dataset, model.spec.seed, scores))
}

/// Scores peaks of the true `Ω`: the ceiling any detector can reach.
pub fn evaluate_truth(samples: &[Sample], pc: &PeakConfig, threshold_m: f64, dataset: &str) -> Result<EvalReport> {
    let scores = samples
        .iter()
        .map(|s| {
            let dets = extract_peaks(&s.omega, pc);
            let m = match_detections(&dets, &s.objects, s.omega.config(), threshold_m)?;
            Ok(SequenceScore { counts: m.counts(), mse: Some(0.0) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(compute_metrics("truth", dataset, 0, scores))
}

/// Scores the all-zero predictor's heat-map MSE (no detections).
pub fn evaluate_zero(samples: &[Sample], dataset: &str) -> Result<EvalReport> {
    let scores = samples
        .iter()
        .map(|s| {
            let zero = crate::grid::HeatMap::zeros(s.omega.config());
            let m = match_detections(&[], &s.objects, s.omega.config(), DEFAULT_MATCH_THRESHOLD_M)?;
            Ok(SequenceScore { counts: m.counts(), mse: Some(heatmap_mse(&zero, &s.omega)?) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(compute_metrics("zero", dataset, 0, scores))
}

/// Trains `kind` with initialisation seed `seed` on the configured stream.
pub fn train_model(cfg: &ExperimentConfig, kind: ModelKind, seed: u64, progress: impl FnMut(usize, f64)) -> Result<TrainedModel> {
    if kind.is_heuristic() {
        return heuristic(kind, &cfg.generator.grid, cfg.horizon());
    }
    let mut source = cfg.training_source();
    train_with_progress(&cfg.spec(kind, seed), &mut source, &cfg.train, progress)
}

/// Trains and evaluates every `(kind, seed)` pair on `test`. Heuristics are
/// evaluated once.
pub fn compare_models(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
    test: &[Sample],
    dataset: &str,
    mut on_report: impl FnMut(&EvalReport),
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &kind in kinds {
        let seeds: &[u64] = if kind.is_heuristic() { &[0] } else { &cfg.model_seeds };
        for &seed in seeds {
            let model = train_model(cfg, kind, seed, |_, _| {})?;
            let r = evaluate_model(&model, test, &cfg.peaks, cfg.match_threshold_m, dataset)?;
            on_report(&r);
            reports.push(r);
        }
    }
    Ok(reports)
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-method means over seeds, in order of first appearance.
pub fn summarize(reports: &[EvalReport]) -> Vec<MethodSummary> {
    let mut out: Vec<MethodSummary> = Vec::new();
    for r in reports {
        if !out.iter().any(|s| s.method == r.method) {
            let rs: Vec<&EvalReport> = reports.iter().filter(|x| x.method == r.method).collect();
            let col = |f: &dyn Fn(&EvalReport) -> f64| mean_std(&rs.iter().map(|x| f(x)).collect::<Vec<_>>());
            let mses: Vec<f64> = rs.iter().filter_map(|x| x.mse).collect();
            out.push(MethodSummary {
                method: r.method.clone(),
                runs: rs.len(),
                precision: col(&|x| x.precision),
                recall: col(&|x| x.recall),
                f1: col(&|x| x.f1),
                mse: if mses.len() == rs.len() { Some(mean_std(&mses)) } else { None },
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    /// `(mean, std)` pairs, as fractions.
    pub precision: (f64, f64),
    pub recall: (f64, f64),
    pub f1: (f64, f64),
    pub mse: Option<(f64, f64)>,
}

/// One row of the f1-vs-`T` table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub horizon: usize,
    pub runs: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub mse_mean: Option<f64>,
}

/// Re-trains each model for every horizon and seed and evaluates on a test
/// set regenerated at that horizon.
pub fn bench_horizon(
    cfg: &ExperimentConfig,
    kinds: &[ModelKind],
    horizons: &[usize],
    mut on_report: impl FnMut(usize, &EvalReport),
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &t in horizons {
        let mut c = cfg.clone();
        c.generator.horizon = t;
        c.validate()?;
        let test = synthetic_test_set(&c)?;
        let reports = compare_models(&c, kinds, &test, "synthetic", |r| on_report(t, r))?;
        for s in summarize(&reports) {
            let mses: Vec<f64> = reports.iter().filter(|r| r.method == s.method).filter_map(|r| r.mse).collect();
            rows.push(BenchRow {
                method: s.method,
                horizon: t,
                runs: s.runs,
                f1_mean: s.f1.0,
                f1_std: s.f1.1,
                precision_mean: s.precision.0,
                recall_mean: s.recall.0,
                mse_mean: (!mses.is_empty()).then(|| mean_std(&mses).0),
            });
        }
    }
    Ok(rows)
}

pub fn bench_rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,T,runs,f1_mean,f1_std,precision_mean,recall_mean,mse_x100_mean\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.1},{:.1},{:.1},{:.1},{}\n",
            r.method,
            r.horizon,
            r.runs,
            100.0 * r.f1_mean,
            100.0 * r.f1_std,
            100.0 * r.precision_mean,
            100.0 * r.recall_mean,
            r.mse_mean.map(|m| format!("{:.3}", 100.0 * m)).unwrap_or_default()
        ));
    }
    out
}

/// Written as `manifest.json` beside every run's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument vector of the run.
    pub argv: Vec<String>,
    pub config: ExperimentConfig,
    /// Files written by the run, relative to the run directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>, config: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            config: config.clone(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))
    }
}

/// File name of scenario `index` in a generated dataset.
pub fn scenario_file_name(index: usize) -> String {
    format!("scenario_{index:05}.txt")
}

/// Writes scenarios `0..count` to `dir`; returns the file names.
pub fn write_dataset(cfg: &ExperimentConfig, count: usize, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let s = generate_indexed(&cfg.generator, &cfg.mix, i as u64)?;
        let name = scenario_file_name(i);
        dataio::write_scenario(&s, dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

/// Loads every `*.txt` scenario in `dir`, sorted by file name.
pub fn read_dataset(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(invalid(format!("no scenario files in {}", dir.display())));
    }
    paths.iter().map(dataio::read_scenario).collect()
}

/// Samples from a directory of scenario files, as a fixed data source.
pub fn dataset_samples(dir: &Path, epsilon: f64, sigma_omega: f64) -> Result<Vec<Sample>> {
    read_dataset(dir)?
        .iter()
        .map(|s| Sample::from_scenario(s, epsilon, sigma_omega))
        .collect()
}

/// Data for `train`: the synthetic stream, or a frozen directory of scenarios.
pub fn data_source(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Box<dyn DataSource>> {
    Ok(match dir {
        None => Box::new(cfg.training_source()),
        Some(d) => Box::new(crate::models::FixedSource {
            samples: dataset_samples(d, cfg.epsilon(), cfg.sigma_omega)?,
        }),
    })
}

/// Parses `"3"` or `"1-3"`.
pub fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| invalid(format!("invalid range '{s}'")));
    let r = match s.split_once('-') {
        Some((a, b)) => num(a)?..=num(b)?,
        None => {
            let v = num(s)?;
            v..=v
        }
    };
    if r.is_empty() {
        return Err(invalid(format!("empty range '{s}'")));
    }
    Ok(r)
}

/// Formats detections as `u v x y` lines.
pub fn describe_cells(cells: &[GridCell], grid: &crate::grid::GridConfig) -> Vec<String> {
    cells
        .iter()
        .map(|&c| {
            let p = crate::grid::cell_center(c, grid).expect("detections lie on the grid");
            format!("{} {} {:.3} {:.3}", c.u, c.v, p.x, p.y)
        })
        .collect()
}
