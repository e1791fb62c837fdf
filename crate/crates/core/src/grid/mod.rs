//! 2-D structured rectangle discretization: node-centered fields, second-order
//! difference operators in conservative (finite-volume) flux form, boundary
//! condition application, trapezoidal quadrature and discrete norms.
//!
//! Nodes form the `(nx+1) x (ny+1)` tensor grid on `[0, Lx] x [0, Ly]`.
//! Quadrature weights are the finite-volume control areas (trapezoid rule),
//! so the flux-form operators satisfy a discrete divergence theorem exactly.

mod field;
mod norm;
mod ops;
mod system;

pub use field::{BoundaryField, ScalarField, VectorField};
pub use norm::{integrate, integrate_boundary, norm, norm_boundary_lp, norm_vector, NormKind};
pub use ops::{
    advect, ddx, ddy, div_a_grad, divergence, divergence_conservative_zero_normal, gradient,
    ConvectionScheme,
};
pub use system::{apply_robin_bc, apply_robin_bc_on_sides, ScalarSystem};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 8 cells per direction, got {0} x {1}")]
    TooCoarse(usize, usize),
    #[error("domain edge lengths must be positive, got {0} x {1}")]
    BadExtent(f64, f64),
    #[error("nonpositive diffusion coefficient at node ({0}, {1})")]
    NonpositiveCoefficient(usize, usize),
    #[error("invalid Lebesgue exponent p = {0}; need p in [1, inf]")]
    InvalidExponent(f64),
    #[error("field contains a non-finite value at node ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Rectangle `[0, Lx] x [0, Ly]` with `nx x ny` cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Which side of the rectangle a boundary node lies on; corners report
/// both memberships through `sides_of`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl GridSpec {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(GridError::BadExtent(lx, ly));
        }
        if nx < 8 || ny < 8 {
            return Err(GridError::TooCoarse(nx, ny));
        }
        Ok(GridSpec { lx, ly, nx, ny })
    }

    /// Unit square with `n x n` cells; the common test configuration.
    pub fn unit_square(n: usize) -> Self {
        GridSpec::new(1.0, 1.0, n, n).expect("unit square grid")
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Largest spacing; the refinement parameter for convergence studies.
    pub fn h_max(&self) -> f64 {
        self.hx().max(self.hy())
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_xy(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    pub fn sides_of(&self, i: usize, j: usize) -> impl Iterator<Item = Side> {
        let mut sides = Vec::with_capacity(2);
        if i == 0 {
            sides.push(Side::West);
        }
        if i == self.nx {
            sides.push(Side::East);
        }
        if j == 0 {
            sides.push(Side::South);
        }
        if j == self.ny {
            sides.push(Side::North);
        }
        sides.into_iter()
    }

    /// Boundary nodes in ascending node-index order (the canonical
    /// enumeration used by `BoundaryField` and the CSV schemas).
    pub fn boundary_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = (self.nx, self.ny);
        (0..=ny)
            .flat_map(move |j| (0..=nx).map(move |i| (i, j)))
            .filter(move |&(i, j)| i == 0 || j == 0 || i == nx || j == ny)
    }

    pub fn n_boundary_nodes(&self) -> usize {
        2 * (self.nx + 1) + 2 * (self.ny - 1)
    }

    /// Maps node index to position in the boundary enumeration, if on the boundary.
    pub fn boundary_index(&self, i: usize, j: usize) -> Option<usize> {
        if !self.is_boundary(i, j) {
            return None;
        }
        // Row 0 contributes nx+1 nodes; interior rows contribute 2 each.
        let full_rows_below = if j == 0 {
            0
        } else {
            (self.nx + 1) + 2 * (j - 1)
        };
        let within = if j == 0 || j == self.ny {
            i
        } else if i == 0 {
            0
        } else {
            1
        };
        Some(full_rows_below + within)
    }

    /// Finite-volume control area of a node (trapezoid quadrature weight).
    #[inline]
    pub fn volume(&self, i: usize, j: usize) -> f64 {
        let cx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let cy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        self.hx() * self.hy() * cx * cy
    }

    /// Boundary arc weight of a node (trapezoid rule along each side it
    /// belongs to; corners pick up contributions from both sides).
    #[inline]
    pub fn boundary_weight(&self, i: usize, j: usize) -> f64 {
        let mut w = 0.0;
        let cy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        let cx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        if i == 0 || i == self.nx {
            w += self.hy() * cy;
        }
        if j == 0 || j == self.ny {
            w += self.hx() * cx;
        }
        w
    }

    /// Outward unit normal; `None` in the interior. Corners have no single
    /// normal and return `None` as well.
    pub fn normal(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let on_x = i == 0 || i == self.nx;
        let on_y = j == 0 || j == self.ny;
        match (on_x, on_y) {
            (true, false) => Some(if i == 0 { (-1.0, 0.0) } else { (1.0, 0.0) }),
            (false, true) => Some(if j == 0 { (0.0, -1.0) } else { (0.0, 1.0) }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_enumeration_is_consistent() {
        let g = GridSpec::unit_square(9);
        let nodes: Vec<_> = g.boundary_nodes().collect();
        assert_eq!(nodes.len(), g.n_boundary_nodes());
        for (k, &(i, j)) in nodes.iter().enumerate() {
            assert_eq!(g.boundary_index(i, j), Some(k), "at node ({i},{j})");
        }
        assert_eq!(g.boundary_index(4, 4), None);
    }

    #[test]
    fn volumes_sum_to_area_and_arcs_to_perimeter() {
        let g = GridSpec::new(2.0, 3.0, 10, 12).unwrap();
        let mut vol = 0.0;
        let mut arc = 0.0;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                vol += g.volume(i, j);
                arc += g.boundary_weight(i, j);
            }
        }
        assert!((vol - 6.0).abs() < 1e-12);
        assert!((arc - 10.0).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_grid_rejected() {
        assert!(GridSpec::new(1.0, 1.0, 4, 20).is_err());
        assert!(GridSpec::new(-1.0, 1.0, 10, 10).is_err());
    }
}
