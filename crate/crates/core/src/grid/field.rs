//! Node-indexed scalar and vector fields on the tensor grid.

use serde::{Deserialize, Serialize};

use super::GridSpec;

/// Scalar values on the `(nx+1) x (ny+1)` node set, row-major in `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    nx1: usize,
    ny1: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField {
            nx1: grid.nx + 1,
            ny1: grid.ny + 1,
            values: vec![0.0; (grid.nx + 1) * (grid.ny + 1)],
        }
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        ScalarField {
            nx1: grid.nx + 1,
            ny1: grid.ny + 1,
            values: vec![c; (grid.nx + 1) * (grid.ny + 1)],
        }
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.node_xy(i, j);
                out.values[j * (grid.nx + 1) + i] = f(x, y);
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx1 + i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[j * self.nx1 + i]
    }

    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, v: f64) {
        self.values[node] = v;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx1, self.ny1)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            nx1: self.nx1,
            ny1: self.ny1,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// self + a * other, elementwise.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        assert_eq!(self.values.len(), other.values.len());
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Two-component vector field; components stored as separate scalar fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.node_xy(i, j);
                let (vx, vy) = f(x, y);
                *out.x.at_mut(i, j) = vx;
                *out.y.at_mut(i, j) = vy;
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.x.all_finite() && self.y.all_finite()
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.x.axpy(a, &other.x);
        self.y.axpy(a, &other.y);
    }
}

/// Values on the boundary nodes, co-indexed with [`GridSpec::boundary_nodes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    values: Vec<f64>,
}

impl BoundaryField {
    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        BoundaryField {
            values: vec![c; grid.n_boundary_nodes()],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .boundary_nodes()
            .map(|(i, j)| {
                let (x, y) = grid.node_xy(i, j);
                f(x, y)
            })
            .collect();
        BoundaryField { values }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        BoundaryField { values }
    }

    #[inline]
    pub fn get(&self, bnd_index: usize) -> f64 {
        self.values[bnd_index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}
