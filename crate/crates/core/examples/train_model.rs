//! Trains one model on the synthetic stream, saves it, reloads it and
//! detects objects in a fresh scenario.
//!
//! `cargo run --release --example train_model -- [model] [steps]`

use gazefollow::experiment::{evaluate_model, synthetic_test_set, train_model, ExperimentConfig};
use gazefollow::models::{detect, ModelKind, TrainedModel};

fn main() -> gazefollow::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ModelKind = args.next().as_deref().unwrap_or("mean-2d-enc").parse()?;
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);

    let mut cfg = ExperimentConfig { test_count: 100, ..ExperimentConfig::default() };
    cfg.train.steps = steps;
    let model = train_model(&cfg, kind, 0, |step, loss| {
        if step % 20 == 0 {
            println!("step {step:4} loss {loss:.5}");
        }
    })?;
    println!("{kind}: {} parameters", model.parameter_count());

    let path = std::env::temp_dir().join(format!("{kind}.ckpt"));
    model.save(&path)?;
    let model = TrainedModel::load(&path)?;

    let test = synthetic_test_set(&cfg)?;
    println!("first test scenario: objects {:?}, detections {:?}", test[0].objects, detect(&model, &test[0].input, &cfg.peaks)?);
    let r = evaluate_model(&model, &test, &cfg.peaks, cfg.match_threshold_m, "synthetic")?;
    println!(
        "on {} scenarios: P {:.1} R {:.1} f1 {:.1} mse x100 {:.3}",
        r.n_sequences(),
        100.0 * r.precision,
        100.0 * r.recall,
        100.0 * r.f1,
        100.0 * r.mse.unwrap_or(f64::NAN)
    );
    Ok(())
}
