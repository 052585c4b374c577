//! Type-I discrete sine transform and the direct five-point Dirichlet
//! Poisson solver built on it.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::fields::Grid;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Unnormalized DST-I of length `n`, computed through a complex FFT of
/// length `2(n + 1)` on odd-extended data. The transform is its own inverse
/// up to the factor `2 / (n + 1)`.
pub(crate) struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        let scratch_len = fft.get_inplace_scratch_len();
        Dst1 {
            n,
            fft,
            scratch_len,
        }
    }

    #[inline]
    pub fn inverse_scale(&self) -> f64 {
        2.0 / (self.n + 1) as f64
    }

    /// Workspace sized for one transform; reusable across calls.
    pub fn make_work(&self) -> DstWork {
        DstWork {
            ext: vec![ZERO; 2 * (self.n + 1)],
            scratch: vec![ZERO; self.scratch_len],
        }
    }

    /// In-place DST-I of `x` (length `n`).
    pub fn transform(&self, x: &mut [C64], work: &mut DstWork) {
        debug_assert_eq!(x.len(), self.n);
        let m = 2 * (self.n + 1);
        work.ext[0] = ZERO;
        work.ext[self.n + 1] = ZERO;
        for j in 0..self.n {
            work.ext[j + 1] = x[j];
            work.ext[m - 1 - j] = -x[j];
        }
        self.fft
            .process_with_scratch(&mut work.ext, &mut work.scratch);
        // Y_k = -2i * sum_j x_j sin(pi j k / (n+1)); recover the sine sum.
        let half_i = C64::new(0.0, 0.5);
        for k in 0..self.n {
            x[k] = half_i * work.ext[k + 1];
        }
    }
}

pub(crate) struct DstWork {
    ext: Vec<C64>,
    scratch: Vec<C64>,
}

/// Eigenvalues `(2 - 2 cos(k pi / (n+1))) / h^2` of the 1-d second-difference
/// operator with Dirichlet conditions, `k = 1..n`.
pub(crate) fn dirichlet_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let s = (0.5 * std::f64::consts::PI * k as f64 / (n + 1) as f64).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

/// Diagonal operator in the 2-d sine basis on the interior nodes: forward
/// DST, per-mode complex multiplier, inverse DST. Exactly inverts any
/// operator of the form `f(lam_x, lam_y) * I` per mode, in particular the
/// five-point Laplacian and the Crank-Nicolson shift `I + i theta (-lap5)`.
pub(crate) struct DstSpectral {
    ni: usize,
    nj: usize,
    dst_x: Dst1,
    dst_y: Dst1,
    /// Multiplier per mode `(k_x, k_y)`, normalization folded in.
    mul: Vec<C64>,
}

impl DstSpectral {
    /// `f(lam_x, lam_y)` maps the 1-d second-difference eigenvalues of a
    /// mode to the multiplier the solver applies to that mode.
    pub fn new(g: &Grid, f: impl Fn(f64, f64) -> C64) -> Self {
        let ni = g.nx - 2;
        let nj = g.ny - 2;
        let dst_x = Dst1::new(ni);
        let dst_y = Dst1::new(nj);
        let lam_x = dirichlet_eigenvalues(ni, g.hx);
        let lam_y = dirichlet_eigenvalues(nj, g.hy);
        let scale = dst_x.inverse_scale() * dst_y.inverse_scale();
        let mut mul = Vec::with_capacity(ni * nj);
        for j in 0..nj {
            for i in 0..ni {
                mul.push(f(lam_x[i], lam_y[j]) * scale);
            }
        }
        DstSpectral {
            ni,
            nj,
            dst_x,
            dst_y,
            mul,
        }
    }

    pub fn make_work(&self) -> SpectralWork {
        SpectralWork {
            wx: self.dst_x.make_work(),
            wy: self.dst_y.make_work(),
            col: vec![ZERO; self.nj],
        }
    }

    #[inline]
    pub fn interior_len(&self) -> usize {
        self.ni * self.nj
    }

    /// Apply in place to `f` in row-major interior order
    /// (`k = (j-1)(nx-2) + (i-1)`).
    pub fn apply_in_place(&self, f: &mut [C64], work: &mut SpectralWork) {
        debug_assert_eq!(f.len(), self.ni * self.nj);
        for j in 0..self.nj {
            self.dst_x
                .transform(&mut f[j * self.ni..(j + 1) * self.ni], &mut work.wx);
        }
        for i in 0..self.ni {
            for j in 0..self.nj {
                work.col[j] = f[j * self.ni + i];
            }
            self.dst_y.transform(&mut work.col, &mut work.wy);
            for j in 0..self.nj {
                f[j * self.ni + i] = work.col[j] * self.mul[j * self.ni + i];
            }
        }
        for j in 0..self.nj {
            self.dst_x
                .transform(&mut f[j * self.ni..(j + 1) * self.ni], &mut work.wx);
        }
        for i in 0..self.ni {
            for j in 0..self.nj {
                work.col[j] = f[j * self.ni + i];
            }
            self.dst_y.transform(&mut work.col, &mut work.wy);
            for j in 0..self.nj {
                f[j * self.ni + i] = work.col[j];
            }
        }
    }
}

pub(crate) struct SpectralWork {
    wx: DstWork,
    wy: DstWork,
    col: Vec<C64>,
}

/// Direct solver for the five-point Laplacian with homogeneous Dirichlet
/// conditions.
pub(crate) struct DirichletPoisson {
    spectral: DstSpectral,
}

impl DirichletPoisson {
    pub fn new(g: &Grid) -> Self {
        DirichletPoisson {
            spectral: DstSpectral::new(g, |lx, ly| C64::new(-1.0 / (lx + ly), 0.0)),
        }
    }

    pub fn make_work(&self) -> SpectralWork {
        self.spectral.make_work()
    }

    #[inline]
    #[allow(dead_code)]
    pub fn interior_len(&self) -> usize {
        self.spectral.interior_len()
    }

    /// Solve `lap5 p = f` in place: `f` holds the interior right-hand side in
    /// row-major interior order and is replaced by the solution.
    pub fn solve_in_place(&self, f: &mut [C64], work: &mut SpectralWork) {
        self.spectral.apply_in_place(f, work);
    }
}
