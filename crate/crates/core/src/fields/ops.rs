//! Second-order finite-difference operators, trapezoidal quadrature and
//! boundary traces. Central stencils at interior nodes, one-sided
//! second-order stencils at boundary nodes.

use num_complex::Complex64 as C64;

use super::field::{FieldKind, ScalarField, Trajectory, TwoStateField, VectorField};
use super::grid::{Face, Grid};
use crate::{Error, Result};

/// First derivative along x at node `(i, j)`.
#[inline]
pub(crate) fn d1x(v: &[C64], g: &Grid, i: usize, j: usize) -> C64 {
    let n = g.idx(i, j);
    let h2 = 2.0 * g.hx;
    if i == 0 {
        (-3.0 * v[n] + 4.0 * v[n + 1] - v[n + 2]) / h2
    } else if i == g.nx - 1 {
        (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / h2
    } else {
        (v[n + 1] - v[n - 1]) / h2
    }
}

/// First derivative along y at node `(i, j)`.
#[inline]
pub(crate) fn d1y(v: &[C64], g: &Grid, i: usize, j: usize) -> C64 {
    let n = g.idx(i, j);
    let s = g.nx;
    let h2 = 2.0 * g.hy;
    if j == 0 {
        (-3.0 * v[n] + 4.0 * v[n + s] - v[n + 2 * s]) / h2
    } else if j == g.ny - 1 {
        (3.0 * v[n] - 4.0 * v[n - s] + v[n - 2 * s]) / h2
    } else {
        (v[n + s] - v[n - s]) / h2
    }
}

#[inline]
pub(crate) fn d2x(v: &[C64], g: &Grid, i: usize, j: usize) -> C64 {
    let n = g.idx(i, j);
    let h2 = g.hx * g.hx;
    if i == 0 {
        (2.0 * v[n] - 5.0 * v[n + 1] + 4.0 * v[n + 2] - v[n + 3]) / h2
    } else if i == g.nx - 1 {
        (2.0 * v[n] - 5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) / h2
    } else {
        (v[n + 1] - 2.0 * v[n] + v[n - 1]) / h2
    }
}

#[inline]
pub(crate) fn d2y(v: &[C64], g: &Grid, i: usize, j: usize) -> C64 {
    let n = g.idx(i, j);
    let s = g.nx;
    let h2 = g.hy * g.hy;
    if j == 0 {
        (2.0 * v[n] - 5.0 * v[n + s] + 4.0 * v[n + 2 * s] - v[n + 3 * s]) / h2
    } else if j == g.ny - 1 {
        (2.0 * v[n] - 5.0 * v[n - s] + 4.0 * v[n - 2 * s] - v[n - 3 * s]) / h2
    } else {
        (v[n + s] - 2.0 * v[n] + v[n - s]) / h2
    }
}

/// Discrete gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let n = g.n_nodes();
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for j in 0..g.ny {
        for i in 0..g.nx {
            gx.push(d1x(&f.values, g, i, j));
            gy.push(d1y(&f.values, g, i, j));
        }
    }
    VectorField::from_components(g.clone(), FieldKind::Complex, [gx, gy]).unwrap()
}

/// Discrete divergence of a vector field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid();
    let mut out = Vec::with_capacity(g.n_nodes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.push(d1x(&v.comps[0], g, i, j) + d1y(&v.comps[1], g, i, j));
        }
    }
    ScalarField::from_values(g.clone(), out).unwrap()
}

/// Discrete Laplacian of a scalar field (five-point at interior nodes).
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid();
    let mut out = Vec::with_capacity(g.n_nodes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.push(d2x(&f.values, g, i, j) + d2y(&f.values, g, i, j));
        }
    }
    ScalarField::from_values(g.clone(), out).unwrap()
}

/// Quadrature region for norms.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    Interior,
    BoundarySubset(&'a [usize]),
}

/// Trapezoidal quadrature weight per node over the full rectangle.
pub fn node_weights(g: &Grid) -> Vec<f64> {
    let wx = axis_weights(g.nx, g.hx);
    let wy = axis_weights(g.ny, g.hy);
    let mut w = Vec::with_capacity(g.n_nodes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            w.push(wx[i] * wy[j]);
        }
    }
    w
}

fn axis_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// Trapezoidal weights over the interior sub-rectangle (zero on boundary
/// nodes).
pub fn interior_weights(g: &Grid) -> Vec<f64> {
    let mut wx = vec![0.0; g.nx];
    let mut wy = vec![0.0; g.ny];
    for i in 1..g.nx - 1 {
        wx[i] = if i == 1 || i == g.nx - 2 {
            0.5 * g.hx
        } else {
            g.hx
        };
    }
    for j in 1..g.ny - 1 {
        wy[j] = if j == 1 || j == g.ny - 2 {
            0.5 * g.hy
        } else {
            g.hy
        };
    }
    let mut w = Vec::with_capacity(g.n_nodes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            w.push(wx[i] * wy[j]);
        }
    }
    w
}

/// Trapezoidal arclength weight for each node of a boundary subset. Each
/// contiguous run along a face is integrated with the trapezoidal rule; the
/// tiny corner gaps between faces are ignored.
pub fn boundary_weights(g: &Grid, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let in_subset: std::collections::HashSet<usize> = subset.iter().copied().collect();
    let mut weights = Vec::with_capacity(subset.len());
    for &n in subset {
        let face = g
            .face(n)
            .ok_or_else(|| Error::Precondition(format!("node {n} is not a boundary node")))?;
        let (i, j) = g.ij(n);
        // neighbors along the same face
        let (h, prev, next) = match face {
            Face::Left | Face::Right => (
                g.hy,
                (j > 0).then(|| g.idx(i, j - 1)),
                (j + 1 < g.ny).then(|| g.idx(i, j + 1)),
            ),
            Face::Bottom | Face::Top => (
                g.hx,
                (i > 1).then(|| g.idx(i - 1, j)),
                (i + 2 < g.nx).then(|| g.idx(i + 1, j)),
            ),
        };
        let mut w = 0.0;
        if prev.map_or(false, |p| in_subset.contains(&p) && g.face(p) == Some(face)) {
            w += 0.5 * h;
        }
        if next.map_or(false, |p| in_subset.contains(&p) && g.face(p) == Some(face)) {
            w += 0.5 * h;
        }
        weights.push(w);
    }
    Ok(weights)
}

fn region_weights(g: &Grid, region: Region<'_>) -> Result<Vec<(usize, f64)>> {
    match region {
        Region::All => Ok(node_weights(g).into_iter().enumerate().collect()),
        Region::Interior => Ok(interior_weights(g)
            .into_iter()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
            .collect()),
        Region::BoundarySubset(subset) => {
            let w = boundary_weights(g, subset)?;
            Ok(subset.iter().copied().zip(w).collect())
        }
    }
}

/// Trapezoidal approximation of the L2 norm of a scalar field over a region.
pub fn scalar_l2(f: &ScalarField, region: Region<'_>) -> Result<f64> {
    let pairs = region_weights(f.grid(), region)?;
    Ok(pairs
        .iter()
        .map(|&(n, w)| w * f.values[n].norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// L2 norm of a vector field: component squares are summed before the root.
pub fn vector_l2(v: &VectorField, region: Region<'_>) -> Result<f64> {
    let pairs = region_weights(v.grid(), region)?;
    Ok(pairs
        .iter()
        .map(|&(n, w)| w * (v.comps[0][n].norm_sqr() + v.comps[1][n].norm_sqr()))
        .sum::<f64>()
        .sqrt())
}

/// Outward normal derivative at each listed boundary node, in list order.
pub fn neumann_trace(f: &ScalarField, subset: &[usize]) -> Result<Vec<C64>> {
    let g = f.grid();
    subset
        .iter()
        .map(|&n| {
            let face = g
                .face(n)
                .ok_or_else(|| Error::Precondition(format!("node {n} is not a boundary node")))?;
            let (i, j) = g.ij(n);
            Ok(match face {
                Face::Right => d1x(&f.values, g, i, j),
                Face::Left => -d1x(&f.values, g, i, j),
                Face::Top => d1y(&f.values, g, i, j),
                Face::Bottom => -d1y(&f.values, g, i, j),
            })
        })
        .collect()
}

/// Time-stencil weights at frame `k` of `nt + 1` frames: centered at
/// interior indices, second-order one-sided at the ends. Returns
/// `(frame indices, coefficients)` with coefficients already divided by dt.
pub(crate) fn time_stencil(k: usize, nt: usize, dt: f64) -> ([usize; 3], [f64; 3]) {
    let c = 1.0 / (2.0 * dt);
    if k == 0 {
        ([0, 1, 2], [-3.0 * c, 4.0 * c, -c])
    } else if k == nt {
        ([nt, nt - 1, nt - 2], [3.0 * c, -4.0 * c, c])
    } else {
        ([k - 1, k, k + 1], [-c, 0.0, c])
    }
}

/// Time derivative of scalar frames sampled at uniform spacing `dt`.
pub fn scalar_time_derivative(frames: &[ScalarField], dt: f64) -> Result<Vec<ScalarField>> {
    if frames.len() < 3 {
        return Err(Error::Precondition("time derivative needs nt >= 2".into()));
    }
    let nt = frames.len() - 1;
    let len = frames[0].values.len();
    Ok((0..=nt)
        .map(|k| {
            let (idx, w) = time_stencil(k, nt, dt);
            let vals = (0..len)
                .map(|n| {
                    w[0] * frames[idx[0]].values[n]
                        + w[1] * frames[idx[1]].values[n]
                        + w[2] * frames[idx[2]].values[n]
                })
                .collect();
            ScalarField::from_values(frames[0].grid().clone(), vals).unwrap()
        })
        .collect())
}

/// Discrete time derivative of a trajectory. Needs at least two steps.
pub fn time_derivative(traj: &Trajectory) -> Result<Trajectory> {
    if traj.nt() < 2 {
        return Err(Error::Precondition("time derivative needs nt >= 2".into()));
    }
    let dt = traj.dt();
    let plus: Vec<ScalarField> = traj.states.iter().map(|s| s.plus.clone()).collect();
    let minus: Vec<ScalarField> = traj.states.iter().map(|s| s.minus.clone()).collect();
    let dplus = scalar_time_derivative(&plus, dt)?;
    let dminus = scalar_time_derivative(&minus, dt)?;
    let states = dplus
        .into_iter()
        .zip(dminus)
        .map(|(p, m)| TwoStateField { plus: p, minus: m })
        .collect();
    Trajectory::new(states, traj.t_final)
}
