//! Preconditioned BiCGStab for the complex non-Hermitian systems arising
//! from the propagator and the divergence-free projection.

use num_complex::Complex64 as C64;

use crate::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solve `A x = b` with right preconditioning, starting from the provided
/// `x`. `op` applies `A`, `pre` applies the preconditioner inverse. Returns
/// `(residual, iterations)`; the iteration stops once the residual 2-norm
/// drops below `rel_tol * |b| + abs_tol`.
pub(crate) fn bicgstab(
    op: impl Fn(&[C64], &mut [C64]),
    pre: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x: &mut [C64],
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let n = b.len();
    debug_assert_eq!(x.len(), n);
    let tol = rel_tol * norm(b) + abs_tol;

    let mut r = vec![ZERO; n];
    op(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut res = norm(&r);
    if res <= tol {
        return Ok((res, 0));
    }

    let r0 = r.clone();
    let mut p = vec![ZERO; n];
    let mut v = vec![ZERO; n];
    let mut phat = vec![ZERO; n];
    let mut shat = vec![ZERO; n];
    let mut t = vec![ZERO; n];
    let mut rho = C64::new(1.0, 0.0);
    let mut alpha = C64::new(1.0, 0.0);
    let mut omega = C64::new(1.0, 0.0);

    for it in 1..=max_iter {
        let rho1 = dot(&r0, &r);
        if rho1.norm() < 1e-300 {
            return Err(Error::SolverDiverged {
                residual: res,
                iterations: it,
            });
        }
        let beta = (rho1 / rho) * (alpha / omega);
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        pre(&p, &mut phat);
        op(&phat, &mut v);
        alpha = rho1 / dot(&r0, &v);
        // s (stored in r) = r - alpha v
        for k in 0..n {
            r[k] -= alpha * v[k];
        }
        res = norm(&r);
        if res <= tol {
            for k in 0..n {
                x[k] += alpha * phat[k];
            }
            return Ok((res, it));
        }
        pre(&r, &mut shat);
        op(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.norm() < 1e-300 {
            return Err(Error::SolverDiverged {
                residual: res,
                iterations: it,
            });
        }
        omega = dot(&t, &r) / tt;
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] -= omega * t[k];
        }
        res = norm(&r);
        if res <= tol {
            return Ok((res, it));
        }
        rho = rho1;
    }
    Err(Error::SolverDiverged {
        residual: res,
        iterations: max_iter,
    })
}
