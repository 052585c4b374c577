use std::sync::Arc;

use crate::{Error, Result};

/// The four faces of the rectangular boundary. Corner nodes are assigned to
/// the x-faces (`Left`/`Right`); corners carry negligible quadrature weight,
/// so the tie-break only fixes the bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub index: usize,
    pub face: Face,
    pub normal: [f64; 2],
}

/// Uniform Cartesian grid on the rectangle `[0, lx] x [0, ly]`, boundary
/// nodes included. Node `(i, j)` sits at `(i*hx, j*hy)` and is stored
/// row-major with `y` as the outer index.
#[derive(Debug)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub boundary: Vec<BoundaryNode>,
    face_of: Vec<Option<Face>>,
}

impl Grid {
    pub const DIM: usize = 2;

    /// Build a grid. Second-order one-sided stencils need at least 8 nodes
    /// per axis.
    pub fn build(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<Grid>> {
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got ({lx}, {ly})"
            )));
        }
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 nodes per axis, got ({nx}, {ny})"
            )));
        }
        let hx = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;

        let mut face_of = vec![None; nx * ny];
        let mut boundary = Vec::with_capacity(2 * nx + 2 * ny - 4);
        for j in 0..ny {
            for i in 0..nx {
                let face = if i == 0 {
                    Some(Face::Left)
                } else if i == nx - 1 {
                    Some(Face::Right)
                } else if j == 0 {
                    Some(Face::Bottom)
                } else if j == ny - 1 {
                    Some(Face::Top)
                } else {
                    None
                };
                if let Some(face) = face {
                    let normal = match face {
                        Face::Left => [-1.0, 0.0],
                        Face::Right => [1.0, 0.0],
                        Face::Bottom => [0.0, -1.0],
                        Face::Top => [0.0, 1.0],
                    };
                    let index = j * nx + i;
                    face_of[index] = Some(face);
                    boundary.push(BoundaryNode {
                        index,
                        face,
                        normal,
                    });
                }
            }
        }

        Ok(Arc::new(Grid {
            lx,
            ly,
            nx,
            ny,
            hx,
            hy,
            boundary,
            face_of,
        }))
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (f64, f64) {
        let (i, j) = self.ij(index);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    #[inline]
    pub fn face(&self, index: usize) -> Option<Face> {
        self.face_of[index]
    }

    #[inline]
    pub fn is_boundary(&self, index: usize) -> bool {
        self.face_of[index].is_some()
    }

    /// Outward unit normal at a boundary node.
    pub fn normal(&self, index: usize) -> Option<[f64; 2]> {
        self.face(index).map(|f| match f {
            Face::Left => [-1.0, 0.0],
            Face::Right => [1.0, 0.0],
            Face::Bottom => [0.0, -1.0],
            Face::Top => [0.0, 1.0],
        })
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        self.boundary.iter().map(|b| b.index).collect()
    }

    /// Number of interior nodes.
    #[inline]
    pub fn n_interior(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    /// Row-major position of an interior node within the interior block.
    #[inline]
    pub fn interior_pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i < self.nx - 1 && j >= 1 && j < self.ny - 1);
        (j - 1) * (self.nx - 2) + (i - 1)
    }

    /// Two grids are interchangeable when their geometry matches exactly.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}
