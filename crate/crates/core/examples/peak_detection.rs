//! Runs the two heuristic detectors on one scenario and scores them.
//!
//! `cargo run --release --example peak_detection`

use gazefollow::eval::{match_detections, DEFAULT_MATCH_THRESHOLD_M};
use gazefollow::peaks::{detect_cone, detect_intersect, extract_peaks, PeakConfig};
use gazefollow::render::{object_heatmap, GazeSequence, DEFAULT_EPSILON, DEFAULT_SIGMA_OMEGA};
use gazefollow::simgen::{generate_scenario, GenConfig};

fn main() -> gazefollow::Result<()> {
    let s = generate_scenario(&GenConfig { seed: 21, n_objects: 3, ..GenConfig::default() })?;
    let pc = PeakConfig::default();
    println!("objects   {:?}", s.objects);

    let truth = extract_peaks(&object_heatmap(&s.objects, &s.grid, DEFAULT_SIGMA_OMEGA)?, &pc);
    let cone = detect_cone(&GazeSequence::from_frames(&s.frames, &s.grid, DEFAULT_EPSILON)?, &pc);
    let inter = detect_intersect(&s.frames, &s.grid, DEFAULT_EPSILON, &pc)?;

    for (name, dets) in [("truth", truth), ("cone", cone), ("intersect", inter)] {
        let c = match_detections(&dets, &s.objects, &s.grid, DEFAULT_MATCH_THRESHOLD_M)?.counts();
        println!("{name:9} {dets:?}\n          tp {} fp {} fn {}", c.tp, c.fp, c.fn_);
    }
    Ok(())
}
