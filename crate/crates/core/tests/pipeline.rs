use gazefollow::dataio::{parse_scenario, scenario_to_string};
use gazefollow::experiment::{evaluate_model, synthetic_test_set, train_model, ExperimentConfig};
use gazefollow::grid::GridConfig;
use gazefollow::models::{heuristic, ModelKind, TrainedModel};
use gazefollow::simgen::{generate_indexed, GenConfig, ScenarioMix};
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { test_count: 12, model_seeds: vec![0], ..ExperimentConfig::default() };
    cfg.generator.grid = GridConfig::square(16, 3.0).unwrap();
    cfg.generator.camera_cell = gazefollow::grid::GridCell::new(8, 1);
    cfg.generator.horizon = 6;
    cfg.train.steps = 30;
    cfg.train.batch_size = 8;
    cfg
}

#[test]
fn short_training_lowers_the_loss_and_survives_a_checkpoint() {
    let cfg = small();
    let model = train_model(&cfg, ModelKind::Mean2DEnc, 1, |_, _| {}).unwrap();
    let head: f64 = model.log[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = model.log[model.log.len() - 5..].iter().sum::<f64>() / 5.0;
    assert!(tail < head, "loss {head} -> {tail}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    let test = synthetic_test_set(&cfg).unwrap();
    let a = evaluate_model(&model, &test, &cfg.peaks, cfg.match_threshold_m, "synthetic").unwrap();
    let b = evaluate_model(&back, &test, &cfg.peaks, cfg.match_threshold_m, "synthetic").unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.mse, b.mse);
}

#[test]
fn training_is_deterministic() {
    let cfg = ExperimentConfig { train: gazefollow::models::TrainConfig { steps: 4, ..small().train }, ..small() };
    let a = train_model(&cfg, ModelKind::Fc1, 3, |_, _| {}).unwrap();
    let b = train_model(&cfg, ModelKind::Fc1, 3, |_, _| {}).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
}

#[test]
fn heuristics_have_no_mse_and_learned_models_do() {
    let cfg = small();
    let test = synthetic_test_set(&cfg).unwrap();
    let cone = heuristic(ModelKind::Cone, &cfg.generator.grid, 6).unwrap();
    let r = evaluate_model(&cone, &test, &cfg.peaks, cfg.match_threshold_m, "synthetic").unwrap();
    assert!(r.mse.is_none());
    assert_eq!(r.counts.tp + r.counts.fn_, test.iter().map(|s| s.objects.len()).sum::<usize>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenario_text_round_trips(seed in 0u64..10_000, index in 0u64..50) {
        let gen = GenConfig { seed, horizon: 5, ..GenConfig::default() };
        let s = generate_indexed(&gen, &ScenarioMix { people: 1..=3, objects: 1..=3 }, index).unwrap();
        let text = scenario_to_string(&s);
        let back = parse_scenario(&text, "prop").unwrap();
        prop_assert_eq!(scenario_to_string(&back), text);
        prop_assert_eq!(back.objects, s.objects);
        prop_assert_eq!(back.targets, s.targets);
    }
}
