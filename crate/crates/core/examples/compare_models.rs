//! Trains and scores a set of models on one synthetic test set, in the style
//! of a results table. Pass a TOML configuration to change any constant.
//!
//! `cargo run --release --example compare_models -- [config.toml] [models]`

use gazefollow::dataio::metrics_to_csv;
use gazefollow::experiment::{compare_models, evaluate_truth, evaluate_zero, summarize, synthetic_test_set, ExperimentConfig};
use gazefollow::models::ModelKind;

fn main() -> gazefollow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(p) if p.ends_with(".toml") => ExperimentConfig::load(p)?,
        _ => ExperimentConfig { test_count: 100, model_seeds: vec![0], ..ExperimentConfig::default() },
    };
    let kinds: Vec<ModelKind> = match args.next() {
        Some(list) => list.split(',').map(str::parse).collect::<gazefollow::Result<_>>()?,
        None => vec![ModelKind::Cone, ModelKind::Intersect, ModelKind::LinearReg, ModelKind::Fc1, ModelKind::Mean2DEnc],
    };

    let test = synthetic_test_set(&cfg)?;
    let mut reports = vec![evaluate_truth(&test, &cfg.peaks, cfg.match_threshold_m, "synthetic")?, evaluate_zero(&test, "synthetic")?];
    reports.extend(compare_models(&cfg, &kinds, &test, "synthetic", |r| eprintln!("done: {} seed {}", r.method, r.seed))?);
    print!("{}", metrics_to_csv(&reports)?);

    println!("\nmethod       runs   f1 mean   f1 std");
    for s in summarize(&reports) {
        println!("{:12} {:4} {:9.1} {:8.1}", s.method, s.runs, 100.0 * s.f1.0, 100.0 * s.f1.1);
    }
    Ok(())
}
