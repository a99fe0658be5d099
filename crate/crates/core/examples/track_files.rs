//! Writes a scenario as a track recording, reads it back and runs a
//! heuristic over its sliding windows.
//!
//! `cargo run --release --example track_files`

use gazefollow::dataio::{parse_tracks, scenario_tracks, sliding_windows, tracks_to_string};
use gazefollow::experiment::{describe_cells, track_samples};
use gazefollow::models::{detect, heuristic, ModelKind};
use gazefollow::peaks::PeakConfig;
use gazefollow::render::{DEFAULT_EPSILON, DEFAULT_SIGMA_OMEGA};
use gazefollow::simgen::{generate_scenario, GenConfig};

fn main() -> gazefollow::Result<()> {
    let s = generate_scenario(&GenConfig { seed: 4, horizon: 50, ..GenConfig::default() })?;
    let text = tracks_to_string(&scenario_tracks(&s, 25.0));
    println!("{}", text.lines().take(8).collect::<Vec<_>>().join("\n"));
    println!("... {} lines", text.lines().count());

    let rec = parse_tracks(&text, "memory")?;
    let horizon = 20;
    println!("windows of {horizon} over {} frames: {:?}", rec.frames.len(), sliding_windows(rec.frames.len(), horizon));

    let model = heuristic(ModelKind::Intersect, &rec.grid, horizon)?;
    for (w, sample) in track_samples(&rec, horizon, DEFAULT_EPSILON, DEFAULT_SIGMA_OMEGA)?.iter().enumerate() {
        let cells = detect(&model, &sample.input, &PeakConfig::default())?;
        println!("window {w}: {:?}", describe_cells(&cells, &rec.grid));
    }
    println!("objects: {:?}", describe_cells(&rec.objects, &rec.grid));
    Ok(())
}
