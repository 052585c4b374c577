//! Shared numerical kernels: sine transforms, a direct Poisson solver and a
//! preconditioned BiCGStab iteration. Internal to the crate.

pub(crate) mod dst;
pub(crate) mod krylov;
