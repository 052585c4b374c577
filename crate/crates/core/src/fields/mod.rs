//! Grids, scalar/vector/two-state fields, discrete calculus, and snapshot I/O.

mod field;
mod grid;
pub mod io;
mod ops;

pub use field::{FieldKind, ScalarField, Trajectory, TwoStateField, VectorField};
pub use grid::{BoundaryNode, Face, Grid};
pub use ops::{
    boundary_weights, divergence, gradient, interior_weights, laplacian, neumann_trace,
    node_weights, scalar_l2, scalar_time_derivative, time_derivative, vector_l2, Region,
};
pub(crate) use ops::{d1x, d1y};
#[cfg(test)]
pub(crate) use ops::{d2x, d2y};
