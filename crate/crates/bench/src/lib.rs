//! Fixtures shared by the benchmarks.

use fracfield::{sample, FieldSpec, Grid, GridField};

/// Gaussian bump on `[-1, 1]^dim` with `n` points per axis.
pub fn gaussian(dim: usize, n: usize) -> GridField {
    let grid = Grid::cube(dim, -1.0, 1.0, n).expect("valid grid");
    sample(&FieldSpec::gaussian(&vec![0.1; dim], 0.2, 1.0), &grid).expect("sampling a gaussian")
}
