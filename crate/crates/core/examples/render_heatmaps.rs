//! Renders the gaze, intersection and object maps of one synthetic scenario
//! and writes them as PGM images.
//!
//! `cargo run --release --example render_heatmaps -- [out_dir]`

use std::path::PathBuf;

use gazefollow::dataio::write_heatmap_pgm;
use gazefollow::render::{mean_intersection_map, object_heatmap, GazeSequence, DEFAULT_EPSILON, DEFAULT_SIGMA_OMEGA};
use gazefollow::simgen::{generate_scenario, GenConfig};

fn main() -> gazefollow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmaps".into()));
    std::fs::create_dir_all(&out)?;

    let s = generate_scenario(&GenConfig { seed: 3, ..GenConfig::default() })?;
    let gaze = GazeSequence::from_frames(&s.frames, &s.grid, DEFAULT_EPSILON)?;
    let mean_gaze = gazefollow::render::mean_gaze_map(&gaze);
    let inter = mean_intersection_map(&s.frames, &s.grid, DEFAULT_EPSILON)?;
    let omega = object_heatmap(&s.objects, &s.grid, DEFAULT_SIGMA_OMEGA)?;

    for (name, m) in [("first_frame", &gaze.maps()[0]), ("mean_gaze", &mean_gaze), ("mean_intersection", &inter), ("omega", &omega)] {
        let lit = m.values().iter().filter(|&&v| v > 0.0).count();
        println!("{name:18} max {:.3}  non-zero cells {lit}", m.max());
        write_heatmap_pgm(m, out.join(format!("{name}.pgm")))?;
    }
    println!("objects at {:?}; images in {}", s.objects, out.display());
    Ok(())
}
