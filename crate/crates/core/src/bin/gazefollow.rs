use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gazefollow::dataio;
use gazefollow::experiment::{self, ExperimentConfig, Manifest};
use gazefollow::models::{self, heuristic, ModelKind, Sample, SequenceInput, TrainedModel};
use gazefollow::render::{frame_maps, mean_of, object_heatmap};
use gazefollow::{Error, Result};

#[derive(Parser)]
#[command(name = "gazefollow", version, about = "Synthetic gaze scenarios, gaze heat-maps and object-location detectors")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic scenarios to a directory.
    Generate(GenerateArgs),
    /// Render gaze, intersection and object heat-maps of one scenario.
    Render(RenderArgs),
    /// Train a learned model and save its checkpoint.
    Train(TrainArgs),
    /// Detect objects in a scenario or a track recording.
    Detect(DetectArgs),
    /// Score models on a test set and write metrics.csv.
    Evaluate(EvaluateArgs),
    /// Re-train and score models for several sequence lengths.
    BenchT(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// People per scenario, `2` or `1-3`.
    #[arg(long)]
    people: Option<String>,
    /// Objects per scenario, `2` or `1-3`.
    #[arg(long)]
    objects: Option<String>,
    /// Frames per scenario.
    #[arg(long, short = 't')]
    horizon: Option<usize>,
    /// Cone half-aperture in degrees.
    #[arg(long)]
    epsilon_deg: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Root seed of the scenario stream.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    epsilon_deg: Option<f64>,
    #[arg(long)]
    sigma_omega: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Parameter initialisation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Root seed of the training scenario stream.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Train on a fixed directory of scenario files instead of the stream.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Drop the encoder-decoder skip connections.
    #[arg(long)]
    no_skips: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Trained checkpoint.
    #[arg(long, conflicts_with = "model")]
    checkpoint: Option<PathBuf>,
    /// Heuristic detector (`cone` or `intersect`).
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long, conflicts_with = "tracks")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Window length for heuristics on track files.
    #[arg(long, short = 't')]
    horizon: Option<usize>,
    /// Write the predicted heat-maps as PGM images here.
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    /// CSV of detections; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Heuristics to include; `truth` scores the true object map.
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    test_seed: Option<u64>,
    /// Evaluate on a directory of scenario files.
    #[arg(long, conflicts_with = "tracks")]
    data_dir: Option<PathBuf>,
    /// Evaluate on windows of a track recording with listed objects.
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "unet-3d2d")]
    models: Vec<ModelKind>,
    #[arg(long = "t-values", value_delimiter = ',', default_value = "10,20,40")]
    horizons: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn apply_data(cfg: &mut ExperimentConfig, a: &DataArgs) -> Result<()> {
    if let Some(p) = &a.people {
        cfg.mix.people = experiment::parse_range(p)?;
    }
    if let Some(o) = &a.objects {
        cfg.mix.objects = experiment::parse_range(o)?;
    }
    if let Some(t) = a.horizon {
        cfg.generator.horizon = t;
    }
    if let Some(e) = a.epsilon_deg {
        cfg.epsilon_deg = e;
    }
    Ok(())
}

fn finish(mut manifest: Manifest, dir: &Path, outputs: Vec<String>) -> Result<()> {
    manifest.outputs = outputs;
    manifest.write(dir)?;
    Ok(())
}

fn generate(cfg: &mut ExperimentConfig, a: GenerateArgs, manifest: Manifest) -> Result<()> {
    apply_data(cfg, &a.data)?;
    if let Some(s) = a.seed {
        cfg.generator.seed = s;
    }
    cfg.validate()?;
    let names = experiment::write_dataset(cfg, a.count, &a.out)?;
    println!("wrote {} scenarios to {}", names.len(), a.out.display());
    finish(Manifest { config: cfg.clone(), ..manifest }, &a.out, names)
}

fn render(cfg: &mut ExperimentConfig, a: RenderArgs, manifest: Manifest) -> Result<()> {
    if let Some(e) = a.epsilon_deg {
        cfg.epsilon_deg = e;
    }
    if let Some(s) = a.sigma_omega {
        cfg.sigma_omega = s;
    }
    cfg.validate()?;
    let s = dataio::read_scenario(&a.scenario)?;
    fs::create_dir_all(&a.out)?;
    let (gaze, inter): (Vec<_>, Vec<_>) = s.frames.iter().map(|f| frame_maps(f, &s.grid, cfg.epsilon())).unzip();
    let mut outputs = Vec::new();
    let mut put = |name: String, m: &gazefollow::grid::HeatMap, raw: bool| -> Result<()> {
        dataio::write_heatmap_pgm(m, a.out.join(format!("{name}.pgm")))?;
        outputs.push(format!("{name}.pgm"));
        if raw {
            dataio::write_heatmap_raw(m, a.out.join(format!("{name}.hm")))?;
            outputs.push(format!("{name}.hm"));
        }
        Ok(())
    };
    for (t, m) in gaze.iter().enumerate() {
        put(format!("gaze_{t:04}"), m, false)?;
    }
    put("mean_gaze".into(), &mean_of(&s.grid, gaze.iter()), true)?;
    put("mean_intersection".into(), &mean_of(&s.grid, inter.iter()), true)?;
    put("omega".into(), &object_heatmap(&s.objects, &s.grid, cfg.sigma_omega)?, true)?;
    println!("rendered {} frames to {}", gaze.len(), a.out.display());
    finish(Manifest { config: cfg.clone(), ..manifest }, &a.out, outputs)
}

fn train(cfg: &mut ExperimentConfig, a: TrainArgs, manifest: Manifest) -> Result<()> {
    apply_data(cfg, &a.data)?;
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(s) = a.data_seed {
        cfg.generator.seed = s;
    }
    cfg.validate()?;
    if a.model.is_heuristic() {
        return Err(Error::Config(format!("{} has no parameters to train", a.model)));
    }
    let mut spec = cfg.spec(a.model, a.seed);
    spec.skips = !a.no_skips;
    let mut source = experiment::data_source(cfg, a.data_dir.as_deref())?;
    let every = (cfg.train.steps / 20).max(1);
    let model = models::train_with_progress(&spec, source.as_mut(), &cfg.train, |step, loss| {
        if step % every == 0 || step + 1 == cfg.train.steps {
            eprintln!("step {step:>6}  loss {loss:.6}");
        }
    })?;
    fs::create_dir_all(&a.out)?;
    model.save(a.out.join("model.ckpt"))?;
    dataio::write_loss_log(&model.log, a.out.join("loss.tsv"))?;
    println!("saved {} ({} parameters) to {}", a.model, model.parameter_count(), a.out.display());
    finish(Manifest { config: cfg.clone(), ..manifest }, &a.out, vec!["model.ckpt".into(), "loss.tsv".into()])
}

fn load_detector(checkpoint: Option<&Path>, kind: Option<ModelKind>, cfg: &ExperimentConfig, horizon: usize) -> Result<TrainedModel> {
    match (checkpoint, kind) {
        (Some(p), _) => TrainedModel::load(p),
        (None, Some(k)) if k.is_heuristic() => heuristic(k, &cfg.generator.grid, horizon),
        (None, Some(k)) => Err(Error::Config(format!("{k} needs --checkpoint"))),
        (None, None) => Err(Error::Config("pass --checkpoint or --model".into())),
    }
}

fn detect(cfg: &mut ExperimentConfig, a: DetectArgs) -> Result<()> {
    cfg.validate()?;
    let mut windows: Vec<SequenceInput> = Vec::new();
    let horizon;
    if let Some(path) = &a.scenario {
        let s = dataio::read_scenario(path)?;
        cfg.generator.grid = s.grid;
        horizon = s.horizon();
        windows.push(SequenceInput::from_frames(&s.frames, &s.grid, cfg.epsilon())?);
    } else if let Some(path) = &a.tracks {
        let rec = dataio::read_tracks(path)?;
        cfg.generator.grid = rec.grid;
        horizon = match (&a.checkpoint, a.horizon) {
            (Some(p), _) => TrainedModel::load(p)?.spec.horizon,
            (None, Some(t)) => t,
            (None, None) => cfg.horizon(),
        };
        for w in rec.windows(horizon) {
            windows.push(SequenceInput::from_frames(w, &rec.grid, cfg.epsilon())?);
        }
    } else {
        return Err(Error::Config("pass --scenario or --tracks".into()));
    }
    let model = load_detector(a.checkpoint.as_deref(), a.model, cfg, horizon)?;
    let mut csv = String::from("window,u,v,x,y\n");
    if let Some(dir) = &a.heatmaps {
        fs::create_dir_all(dir)?;
    }
    for (w, input) in windows.iter().enumerate() {
        let pred = models::predict(&model, input)?;
        if let Some(dir) = &a.heatmaps {
            dataio::write_heatmap_pgm(&pred, dir.join(format!("prediction_{w:04}.pgm")))?;
        }
        let cells = gazefollow::peaks::extract_peaks(&pred, &cfg.peaks);
        for line in experiment::describe_cells(&cells, input.config()) {
            csv.push_str(&format!("{w},{}\n", line.replace(' ', ",")));
        }
    }
    match &a.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn evaluate(cfg: &mut ExperimentConfig, a: EvaluateArgs, manifest: Manifest) -> Result<()> {
    apply_data(cfg, &a.data)?;
    if let Some(n) = a.test_count {
        cfg.test_count = n;
    }
    if let Some(s) = a.test_seed {
        cfg.test_seed = s;
    }
    cfg.validate()?;
    let mut loaded = Vec::new();
    for p in &a.checkpoints {
        loaded.push(TrainedModel::load(p)?);
    }
    let horizon = loaded.first().map_or(cfg.horizon(), |m| m.spec.horizon);
    if loaded.iter().any(|m| m.spec.horizon != horizon) {
        return Err(Error::Config("checkpoints were trained for different sequence lengths".into()));
    }
    cfg.generator.horizon = horizon;
    let (dataset, test): (&str, Vec<Sample>) = if let Some(dir) = &a.data_dir {
        ("files", experiment::dataset_samples(dir, cfg.epsilon(), cfg.sigma_omega)?)
    } else if let Some(path) = &a.tracks {
        let rec = dataio::read_tracks(path)?;
        ("tracks", experiment::track_samples(&rec, horizon, cfg.epsilon(), cfg.sigma_omega)?)
    } else {
        ("synthetic", experiment::synthetic_test_set(cfg)?)
    };
    if test.is_empty() {
        return Err(Error::Config("the test set is empty".into()));
    }
    let mut reports = Vec::new();
    for name in &a.models {
        let r = match name.as_str() {
            "truth" => experiment::evaluate_truth(&test, &cfg.peaks, cfg.match_threshold_m, dataset)?,
            "zero" => experiment::evaluate_zero(&test, dataset)?,
            other => {
                let kind: ModelKind = other.parse()?;
                let m = load_detector(None, Some(kind), cfg, horizon)?;
                experiment::evaluate_model(&m, &test, &cfg.peaks, cfg.match_threshold_m, dataset)?
            }
        };
        reports.push(r);
    }
    for m in &loaded {
        reports.push(experiment::evaluate_model(m, &test, &cfg.peaks, cfg.match_threshold_m, dataset)?);
    }
    if reports.is_empty() {
        return Err(Error::Config("nothing to evaluate: pass --checkpoint or --model".into()));
    }
    fs::create_dir_all(&a.out)?;
    let table = dataio::metrics_to_csv(&reports)?;
    fs::write(a.out.join("metrics.csv"), &table)?;
    print!("{table}");
    finish(Manifest { config: cfg.clone(), ..manifest }, &a.out, vec!["metrics.csv".into()])
}

fn bench(cfg: &mut ExperimentConfig, a: BenchArgs, manifest: Manifest) -> Result<()> {
    apply_data(cfg, &a.data)?;
    if let Some(s) = a.seeds {
        cfg.model_seeds = s;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(n) = a.test_count {
        cfg.test_count = n;
    }
    cfg.validate()?;
    let mut all = Vec::new();
    let rows = experiment::bench_horizon(cfg, &a.models, &a.horizons, |t, r| {
        eprintln!("T={t:<3} {:<10} seed {:<3} f1 {:.1}", r.method, r.seed, 100.0 * r.f1);
        all.push(r.clone());
    })?;
    fs::create_dir_all(&a.out)?;
    let table = experiment::bench_rows_to_csv(&rows);
    fs::write(a.out.join("bench_t.csv"), &table)?;
    dataio::write_metrics(&all, a.out.join("runs.csv"))?;
    print!("{table}");
    finish(Manifest { config: cfg.clone(), ..manifest }, &a.out, vec!["bench_t.csv".into(), "runs.csv".into()])
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Render(_) => "render",
        Command::Train(_) => "train",
        Command::Detect(_) => "detect",
        Command::Evaluate(_) => "evaluate",
        Command::BenchT(_) => "bench-t",
    };
    let manifest = Manifest::new(name, argv, &cfg);
    match cli.command {
        Command::Generate(a) => generate(&mut cfg, a, manifest),
        Command::Render(a) => render(&mut cfg, a, manifest),
        Command::Train(a) => train(&mut cfg, a, manifest),
        Command::Detect(a) => detect(&mut cfg, a),
        Command::Evaluate(a) => evaluate(&mut cfg, a, manifest),
        Command::BenchT(a) => bench(&mut cfg, a, manifest),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
