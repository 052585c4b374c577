//! The probe protocol: `3d + 2` two-state initial conditions (two constant
//! pairs plus coordinate-linear pairs) and the quantitative injectivity
//! check of the map recovering the three vector unknowns from gradients of
//! the probes.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
#[cfg(test)]
use num_complex::Complex64 as C64;

use crate::fields::{io, Grid, ScalarField, TwoStateField};
use crate::{Error, Result};

/// Role of one probe inside the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLabel {
    /// Constant pair: `(1, 0)` or `(0, 1)`.
    ConstantPair,
    /// `(x_j, 0)` with the coordinate index `j` (0-based).
    CoordPlus(usize),
    /// `(0, x_j)`.
    CoordMinus(usize),
    /// `(x_j, x_j)`.
    CoordBoth(usize),
}

impl fmt::Display for ProbeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeLabel::ConstantPair => write!(f, "constant-pair"),
            ProbeLabel::CoordPlus(j) => write!(f, "coord-plus-{j}"),
            ProbeLabel::CoordMinus(j) => write!(f, "coord-minus-{j}"),
            ProbeLabel::CoordBoth(j) => write!(f, "coord-both-{j}"),
        }
    }
}

/// Ordered set of probe initial states with the injectivity constant of
/// their stacked gradient-recovery map.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub probes: Vec<TwoStateField>,
    pub labels: Vec<ProbeLabel>,
    /// Smallest singular value of the stacked gradient-recovery map.
    pub upsilon0: f64,
    pub d: usize,
}

impl ProbeSet {
    pub fn grid(&self) -> &Arc<Grid> {
        self.probes[0].grid()
    }

    /// Write every probe state and a manifest into a directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(&format!("probes {}\n", self.probes.len()));
        manifest.push_str(&format!("upsilon0 {:.16e}\n", self.upsilon0));
        for (k, (p, l)) in self.probes.iter().zip(&self.labels).enumerate() {
            let plus = format!("probe_{k}_plus.txt");
            let minus = format!("probe_{k}_minus.txt");
            io::write_scalar(&dir.join(&plus), &p.plus)?;
            io::write_scalar(&dir.join(&minus), &p.minus)?;
            manifest.push_str(&format!("probe {k} {l} {plus} {minus}\n"));
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }
}

fn coordinate_field(grid: Arc<Grid>, j: usize) -> ScalarField {
    ScalarField::from_real_fn(grid, move |x, y| if j == 0 { x } else { y })
}

/// Build the canonical `3d + 2` probe set: two constant pairs, then
/// `(x_j, 0)`, `(0, x_j)` and `(x_j, x_j)` for each coordinate.
pub fn build_probe_set(grid: Arc<Grid>, d: usize) -> Result<ProbeSet> {
    if d != 2 {
        return Err(Error::Precondition(format!(
            "the protocol is implemented for two spatial dimensions, got d = {d}"
        )));
    }
    let one = ScalarField::from_real_fn(grid.clone(), |_, _| 1.0);
    let zero = ScalarField::zeros(grid.clone());
    let mut probes = Vec::with_capacity(3 * d + 2);
    let mut labels = Vec::with_capacity(3 * d + 2);
    probes.push(TwoStateField::new(one.clone(), zero.clone())?);
    labels.push(ProbeLabel::ConstantPair);
    probes.push(TwoStateField::new(zero.clone(), one)?);
    labels.push(ProbeLabel::ConstantPair);
    for j in 0..d {
        probes.push(TwoStateField::new(
            coordinate_field(grid.clone(), j),
            zero.clone(),
        )?);
        labels.push(ProbeLabel::CoordPlus(j));
    }
    for j in 0..d {
        probes.push(TwoStateField::new(
            zero.clone(),
            coordinate_field(grid.clone(), j),
        )?);
        labels.push(ProbeLabel::CoordMinus(j));
    }
    for j in 0..d {
        let c = coordinate_field(grid.clone(), j);
        probes.push(TwoStateField::new(c.clone(), c)?);
        labels.push(ProbeLabel::CoordBoth(j));
    }
    let mut set = ProbeSet {
        probes,
        labels,
        upsilon0: 0.0,
        d,
    };
    set.upsilon0 = check_probe_matrix(&set)?;
    Ok(set)
}

fn probe_gradient(f: &ScalarField) -> [f64; 2] {
    // the probes are linear, so a central difference at any interior node
    // is exact; read it off at the cell nearest the center
    let g = f.grid();
    let (i, j) = (g.nx / 2, g.ny / 2);
    let gx = (f.values[g.idx(i + 1, j)] - f.values[g.idx(i - 1, j)]).re / (2.0 * g.hx);
    let gy = (f.values[g.idx(i, j + 1)] - f.values[g.idx(i, j - 1)]).re / (2.0 * g.hy);
    [gx, gy]
}

/// Assemble the stacked linear map sending the unknown triple of real
/// vectors (two magnetic potentials and the vector coupling, `3d` numbers)
/// to its pairings with the probe gradients, and return its smallest
/// singular value. Errors when the map is numerically rank-deficient.
pub fn check_probe_matrix(p: &ProbeSet) -> Result<f64> {
    let d = p.d;
    if p.probes.len() != 3 * d + 2 {
        return Err(Error::Precondition(format!(
            "expected {} probes, found {}",
            3 * d + 2,
            p.probes.len()
        )));
    }
    let coord_probes = &p.probes[2..];
    let rows = 4 * coord_probes.len();
    let mut m = DMatrix::<f64>::zeros(rows, 3 * d);
    for (k, probe) in coord_probes.iter().enumerate() {
        let gp = probe_gradient(&probe.plus);
        let gm = probe_gradient(&probe.minus);
        for l in 0..d {
            m[(4 * k, l)] = gp[l]; // A+ . grad u0+
            m[(4 * k + 1, d + l)] = gm[l]; // A- . grad u0-
            m[(4 * k + 2, 2 * d + l)] = gm[l]; // Phi . grad u0-
            m[(4 * k + 3, 2 * d + l)] = gp[l]; // Phi . grad u0+
        }
    }
    let svd = m.svd(false, false);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if sigma_min < 1e-12 {
        return Err(Error::DegenerateProbes(sigma_min));
    }
    Ok(sigma_min)
}
