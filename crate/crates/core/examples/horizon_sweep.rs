//! Re-trains a model at several sequence lengths and prints f1 against `T`.
//!
//! `cargo run --release --example horizon_sweep -- [model] [steps]`

use gazefollow::experiment::{bench_horizon, bench_rows_to_csv, ExperimentConfig};
use gazefollow::models::ModelKind;

fn main() -> gazefollow::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ModelKind = args.next().as_deref().unwrap_or("mean-2d-enc").parse()?;
    let mut cfg = ExperimentConfig { test_count: 100, model_seeds: vec![0], ..ExperimentConfig::default() };
    cfg.train.steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);

    let rows = bench_horizon(&cfg, &[kind], &[10, 20, 40], |t, r| eprintln!("T={t}: f1 {:.1}", 100.0 * r.f1))?;
    print!("{}", bench_rows_to_csv(&rows));
    Ok(())
}
