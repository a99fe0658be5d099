//! Samples synthetic scenarios and prints what each person attends to.
//!
//! `cargo run --release --example generate_scenarios -- [count]`

use gazefollow::simgen::{generate_indexed, GenConfig, ScenarioMix, Target};

fn main() -> gazefollow::Result<()> {
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let gen = GenConfig { seed: 11, ..GenConfig::default() };
    let mix = ScenarioMix::default();

    for i in 0..count {
        let s = generate_indexed(&gen, &mix, i)?;
        s.check_invariants(&GenConfig { n_people: s.n_people(), n_objects: s.objects.len(), ..gen.clone() })?;
        println!("scenario {i}: {} people, objects {:?}", s.n_people(), s.objects);
        for (n, targets) in s.targets.iter().enumerate() {
            let mut runs: Vec<(Target, usize)> = Vec::new();
            for &t in targets {
                match runs.last_mut() {
                    Some((last, len)) if *last == t => *len += 1,
                    _ => runs.push((t, 1)),
                }
            }
            let start = s.trajectory(n).next().expect("non-empty trajectory");
            println!("  person {n} starts at ({:.2}, {:.2}); attention {runs:?}", start.x, start.y);
        }
    }
    Ok(())
}
