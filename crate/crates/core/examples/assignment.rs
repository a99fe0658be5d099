//! Minimum-cost assignment and the detection scoring built on it.
//!
//! `cargo run --example assignment`

use gazefollow::eval::{f1_score, hungarian, match_detections, DEFAULT_MATCH_THRESHOLD_M};
use gazefollow::grid::{GridCell, GridConfig};

fn main() -> gazefollow::Result<()> {
    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let pairs = hungarian(&cost)?;
    let total: f64 = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    println!("assignment {pairs:?} with cost {total}");

    // Rectangular input: the extra row stays unassigned.
    println!("2 columns: {:?}", hungarian(&[vec![1.0, 9.0], vec![9.0, 1.0], vec![0.5, 0.5]])?);

    let grid = GridConfig::default();
    let detections = [GridCell::new(5, 5), GridCell::new(20, 20), GridCell::new(30, 2)];
    let objects = [GridCell::new(6, 5), GridCell::new(25, 20)];
    let m = match_detections(&detections, &objects, &grid, DEFAULT_MATCH_THRESHOLD_M)?;
    let c = m.counts();
    println!("pairs {:?}, tp {} fp {} fn {}", m.pairs, c.tp, c.fp, c.fn_);
    println!("precision {:.3} recall {:.3} f1 {:.3}", c.precision(), c.recall(), c.f1());
    println!("f1 of P=18.8, R=53.9: {:.2}", f1_score(18.8, 53.9));
    Ok(())
}
