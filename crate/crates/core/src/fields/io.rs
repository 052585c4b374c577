//! Text snapshot format for fields.
//!
//! Header line `FIELD <nx> <ny> <components> <real|complex>`, followed by
//! `nx * ny` data lines in row-major order (y outer). Real-kind lines hold
//! `components` values, complex-kind lines `2 * components` (re im pairs),
//! printed with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::field::{FieldKind, ScalarField, VectorField};
use super::grid::Grid;
use crate::{Error, Result};

fn write_snapshot(
    path: &Path,
    nx: usize,
    ny: usize,
    kind: FieldKind,
    comps: &[&[C64]],
) -> Result<()> {
    let mut out = String::new();
    let kind_str = match kind {
        FieldKind::Real => "real",
        FieldKind::Complex => "complex",
    };
    writeln!(out, "FIELD {} {} {} {}", nx, ny, comps.len(), kind_str).unwrap();
    for n in 0..nx * ny {
        let mut first = true;
        for c in comps {
            let v = c[n];
            if !first {
                out.push(' ');
            }
            first = false;
            match kind {
                FieldKind::Real => write!(out, "{:.16e}", v.re).unwrap(),
                FieldKind::Complex => write!(out, "{:.16e} {:.16e}", v.re, v.im).unwrap(),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    write_snapshot(path, g.nx, g.ny, FieldKind::Complex, &[&f.values])
}

pub fn write_vector(path: &Path, v: &VectorField) -> Result<()> {
    let g = v.grid();
    write_snapshot(path, g.nx, g.ny, v.kind, &[&v.comps[0], &v.comps[1]])
}

struct Header {
    nx: usize,
    ny: usize,
    components: usize,
    kind: FieldKind,
}

fn read_snapshot(path: &Path) -> Result<(Header, Vec<Vec<C64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty snapshot", path.display())))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "FIELD" {
        return Err(Error::Parse(format!("{}: bad header", path.display())));
    }
    let bad = |what: &str| Error::Parse(format!("{}: bad {what}", path.display()));
    let nx: usize = parts[1].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[2].parse().map_err(|_| bad("ny"))?;
    let components: usize = parts[3].parse().map_err(|_| bad("component count"))?;
    let kind = match parts[4] {
        "real" => FieldKind::Real,
        "complex" => FieldKind::Complex,
        _ => return Err(bad("kind")),
    };
    let per_line = match kind {
        FieldKind::Real => components,
        FieldKind::Complex => 2 * components,
    };
    let mut comps = vec![Vec::with_capacity(nx * ny); components];
    let mut count = 0usize;
    for line in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("data line"))?;
        if vals.len() != per_line {
            return Err(bad("data line width"));
        }
        for (c, slot) in comps.iter_mut().enumerate() {
            let v = match kind {
                FieldKind::Real => C64::new(vals[c], 0.0),
                FieldKind::Complex => C64::new(vals[2 * c], vals[2 * c + 1]),
            };
            slot.push(v);
        }
        count += 1;
    }
    if count != nx * ny {
        return Err(bad("data line count"));
    }
    Ok((
        Header {
            nx,
            ny,
            components,
            kind,
        },
        comps,
    ))
}

pub fn read_scalar(path: &Path, grid: Arc<Grid>) -> Result<ScalarField> {
    let (h, mut comps) = read_snapshot(path)?;
    if h.nx != grid.nx || h.ny != grid.ny || h.components != 1 {
        return Err(Error::ShapeMismatch(format!(
            "{}: snapshot shape does not match grid",
            path.display()
        )));
    }
    ScalarField::from_values(grid, comps.remove(0))
}

pub fn read_vector(path: &Path, grid: Arc<Grid>) -> Result<VectorField> {
    let (h, mut comps) = read_snapshot(path)?;
    if h.nx != grid.nx || h.ny != grid.ny || h.components != 2 {
        return Err(Error::ShapeMismatch(format!(
            "{}: snapshot shape does not match grid",
            path.display()
        )));
    }
    let cy = comps.remove(1);
    let cx = comps.remove(0);
    VectorField::from_components(grid, h.kind, [cx, cy])
}
