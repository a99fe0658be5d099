//! Extended gaze following on a top-view grid.
//!
//! People's head positions and pans are turned into gaze heat-maps
//! ([`render`]), fed to heuristics or learned encoder/decoders ([`models`])
//! that estimate an object heat-map, whose local maxima ([`peaks`]) are the
//! predicted object locations, including ones no camera sees. [`simgen`]
//! samples synthetic scenarios for training and [`eval`] scores detections
//! with Hungarian matching.
//!
//! ```
//! use gazefollow::grid::{world_to_cell, GridConfig, WorldPoint};
//!
//! let grid = GridConfig::default();
//! let cell = world_to_cell(WorldPoint::new(1.5, 0.1), &grid).unwrap();
//! assert_eq!((cell.u, cell.v), (16, 2));
//! ```

pub mod dataio;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod grid;
pub mod models;
pub mod peaks;
pub mod render;
pub mod simgen;

pub use error::{Error, Result};
