use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::grid::Grid;
use crate::{Error, Result};

/// Storage kind of a vector field. Real-kind fields keep zero imaginary
/// parts; there is a single complex code path for the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Real,
    Complex,
}

/// Complex scalar field, one value per grid node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    pub values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_nodes();
        ScalarField {
            grid,
            values: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let values = (0..grid.n_nodes())
            .map(|n| {
                let (x, y) = grid.coords(n);
                f(x, y)
            })
            .collect();
        ScalarField { grid, values }
    }

    pub fn from_real_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, y| C64::new(f(x, y), 0.0))
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite field value".into()));
        }
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Nodewise linear combination `self + c * other`.
    pub fn axpy(&self, c: C64, other: &ScalarField) -> ScalarField {
        debug_assert!(self.grid.same_geometry(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, c: C64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Vector field with `d = 2` per-node components.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    pub kind: FieldKind,
    pub comps: [Vec<C64>; 2],
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>, kind: FieldKind) -> Self {
        let n = grid.n_nodes();
        VectorField {
            grid,
            kind,
            comps: [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]],
        }
    }

    pub fn from_real_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> [f64; 2]) -> Self {
        let n = grid.n_nodes();
        let mut cx = Vec::with_capacity(n);
        let mut cy = Vec::with_capacity(n);
        for node in 0..n {
            let (x, y) = grid.coords(node);
            let v = f(x, y);
            cx.push(C64::new(v[0], 0.0));
            cy.push(C64::new(v[1], 0.0));
        }
        VectorField {
            grid,
            kind: FieldKind::Real,
            comps: [cx, cy],
        }
    }

    pub fn from_components(grid: Arc<Grid>, kind: FieldKind, comps: [Vec<C64>; 2]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.n_nodes() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} values per component, got {}",
                    grid.n_nodes(),
                    c.len()
                )));
            }
        }
        if kind == FieldKind::Real
            && comps.iter().flatten().any(|v| v.im != 0.0)
        {
            return Err(Error::ShapeMismatch(
                "real-kind vector field has nonzero imaginary part".into(),
            ));
        }
        Ok(VectorField { grid, kind, comps })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.n_nodes())
            .map(|n| (self.comps[0][n].norm_sqr() + self.comps[1][n].norm_sqr()).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn axpy(&self, c: C64, other: &VectorField) -> VectorField {
        debug_assert!(self.grid.same_geometry(&other.grid));
        let kind = if self.kind == FieldKind::Real && other.kind == FieldKind::Real && c.im == 0.0
        {
            FieldKind::Real
        } else {
            FieldKind::Complex
        };
        let comps = [0, 1].map(|k| {
            self.comps[k]
                .iter()
                .zip(&other.comps[k])
                .map(|(a, b)| a + c * b)
                .collect()
        });
        VectorField {
            grid: self.grid.clone(),
            kind,
            comps,
        }
    }

    pub fn scaled(&self, c: C64) -> VectorField {
        let kind = if self.kind == FieldKind::Real && c.im == 0.0 {
            FieldKind::Real
        } else {
            FieldKind::Complex
        };
        VectorField {
            grid: self.grid.clone(),
            kind,
            comps: [0, 1].map(|k| self.comps[k].iter().map(|v| c * v).collect()),
        }
    }
}

/// The coupled pair `(u^+, u^-)` on a shared grid.
#[derive(Debug, Clone)]
pub struct TwoStateField {
    pub plus: ScalarField,
    pub minus: ScalarField,
}

impl TwoStateField {
    pub fn new(plus: ScalarField, minus: ScalarField) -> Result<Self> {
        if !plus.grid().same_geometry(minus.grid()) {
            return Err(Error::ShapeMismatch(
                "two-state components on different grids".into(),
            ));
        }
        Ok(TwoStateField { plus, minus })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        TwoStateField {
            plus: ScalarField::zeros(grid.clone()),
            minus: ScalarField::zeros(grid),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        self.plus.grid()
    }

    pub fn axpy(&self, c: C64, other: &TwoStateField) -> TwoStateField {
        TwoStateField {
            plus: self.plus.axpy(c, &other.plus),
            minus: self.minus.axpy(c, &other.minus),
        }
    }

    pub fn scaled(&self, c: C64) -> TwoStateField {
        TwoStateField {
            plus: self.plus.scaled(c),
            minus: self.minus.scaled(c),
        }
    }
}

/// Time-indexed sequence of two-state fields on `[0, T]`, `nt + 1` frames.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<TwoStateField>,
    pub t_final: f64,
}

impl Trajectory {
    pub fn new(states: Vec<TwoStateField>, t_final: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Precondition(
                "trajectory needs at least two time levels".into(),
            ));
        }
        if !(t_final > 0.0) {
            return Err(Error::Precondition("t_final must be positive".into()));
        }
        let g = states[0].grid().clone();
        if states.iter().any(|s| !s.grid().same_geometry(&g)) {
            return Err(Error::ShapeMismatch(
                "trajectory states on different grids".into(),
            ));
        }
        Ok(Trajectory { states, t_final })
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.states.len() - 1
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_final / self.nt() as f64
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        self.states[0].grid()
    }
}
