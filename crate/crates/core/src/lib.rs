//! Numerical laboratory for coupled two-state magnetic Schrodinger systems.
//!
//! The crate is organized around six subsystems:
//!
//! - [`fields`]: uniform rectangular grids, complex scalar/vector fields,
//!   finite-difference operators, quadrature and boundary traces;
//! - [`coeffs`]: admissible coefficient sets `(A^+, A^-, q^+, q^-, Phi, phi)`,
//!   divergence-free projection and pairing-condition reports;
//! - [`dynamics`]: the two-state Hamiltonian and its Crank-Nicolson
//!   propagator, plus self-adjointness and relative-bound checks;
//! - [`carleman`]: Carleman weight functions, the conjugated operators
//!   `R1`/`R2`, the observation boundary and estimate verification;
//! - [`probing`]: the `3d+2` probe initial states and the probe-matrix
//!   positivity check;
//! - [`inversion`]: measurement simulation, the initial-value identity of the
//!   time-differentiated system, stability reports and both reconstruction
//!   paths.

pub mod carleman;
pub mod coeffs;
pub mod dynamics;
pub mod fields;
pub mod inversion;
mod numerics;
pub mod probing;

pub use num_complex::Complex64 as C64;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty quadrature region")]
    EmptyRegion,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linear solver failed to converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("coefficient bound violated: {0}")]
    BoundViolation(String),
    #[error("degenerate probe set: smallest singular value {0:.3e}")]
    DegenerateProbes(f64),
    #[error("probe {probe}: {source}")]
    Probe {
        probe: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
