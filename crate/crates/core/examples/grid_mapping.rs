//! Maps world coordinates to grid cells and back.
//!
//! `cargo run --example grid_mapping`

use gazefollow::grid::{cell_center, cell_distance_m, world_to_cell, GridCell, GridConfig, WorldPoint};

fn main() -> gazefollow::Result<()> {
    let grid = GridConfig::default();
    println!("{}x{} cells of {:.4} m", grid.s_u, grid.s_v, grid.cell_width());

    for (x, y) in [(0.0, 0.0), (1.5, 0.1), (2.999, 3.0), (0.75, 2.2)] {
        let cell = world_to_cell(WorldPoint::new(x, y), &grid)?;
        let c = cell_center(cell, &grid)?;
        println!("({x:5.3}, {y:5.3}) -> cell ({:2}, {:2}) centred at ({:.4}, {:.4})", cell.u, cell.v, c.x, c.y);
    }

    let (a, b) = (GridCell::new(1, 1), GridCell::new(32, 32));
    println!("diagonal distance: {:.5} m", cell_distance_m(a, b, &grid)?);
    Ok(())
}
