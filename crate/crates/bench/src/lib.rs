//! Shared fixtures for the criterion benches.

use stochmech_core::pipeline::{solve_on, Solution};
use stochmech_core::{Scenario, SpatialGrid, TimeGrid};

/// A coherent-state solution on a reduced grid, cheap enough to rebuild per
/// bench group.
pub fn coherent_solution(n_points: usize, n_steps: usize) -> Solution {
    let s = Scenario::Coherent;
    let g = s.default_grid();
    let grid = SpatialGrid::new(g.x_min(), g.x_max(), n_points).expect("grid");
    let tgrid = TimeGrid::new(0.0, 1.0, n_steps).expect("time grid");
    solve_on(s, &s.default_params(), grid, tgrid, 1e-10, 0.0).expect("solve")
}
