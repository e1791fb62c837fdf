//! The three elliptic subproblems composing one application of the homotopy
//! solution operator: flow (continuity + momentum), species transport in
//! log variables, and log-temperature. Each is a damped Newton or Picard
//! solve of a discretized PDE with the model's boundary conditions.

mod elliptic;
mod flow;
mod kirchhoff;
mod species;
mod thermal;

pub use flow::{flow_residual, solve_flow, FlowInputs, FlowWorkspace};
pub use kirchhoff::{kirchhoff, kirchhoff_inverse};
pub use species::{solve_species, SpeciesInit, SpeciesInputs};
pub use thermal::{solve_thermal, ThermalInputs};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ConvectionScheme, GridSpec, ScalarField, VectorField};
use crate::linalg::LinalgError;

/// Exponent magnitude beyond which a log-variable iterate is treated as
/// blown up rather than silently clipped.
pub const OVERFLOW_GUARD: f64 = 700.0;

/// Discrete solution fields: mean-zero density perturbation, velocity, log
/// temperature, and log mass fractions, together with the mean density.
/// Temperature and mass fractions are strictly positive by representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub r: ScalarField,
    pub u: VectorField,
    /// log(theta)
    pub z: ScalarField,
    /// log(Y_k), one field per species
    pub w: Vec<ScalarField>,
    /// Mean density.
    pub m: f64,
}

impl FieldState {
    /// The canonical decoupled-end start: fields at rest, temperature at the
    /// mean outer temperature, equidistributed composition.
    pub fn uniform_start(grid: &GridSpec, m: f64, n_species: usize, theta_mean: f64) -> Self {
        FieldState {
            r: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            z: ScalarField::constant(grid, theta_mean.ln()),
            w: vec![ScalarField::constant(grid, (1.0 / n_species as f64).ln()); n_species],
            m,
        }
    }

    pub fn theta(&self) -> ScalarField {
        self.z.map(f64::exp)
    }

    pub fn mass_fractions(&self) -> Vec<ScalarField> {
        self.w.iter().map(|wk| wk.map(f64::exp)).collect()
    }

    pub fn density(&self) -> ScalarField {
        self.r.map(|v| self.m + v)
    }

    pub fn all_finite(&self) -> bool {
        self.r.all_finite()
            && self.u.all_finite()
            && self.z.all_finite()
            && self.w.iter().all(|f| f.all_finite())
    }

    /// Convex blend `(1 - t) self + t other`, componentwise in the stored
    /// (log) variables.
    pub fn blend(&self, other: &FieldState, t: f64) -> FieldState {
        let mix = |a: &ScalarField, b: &ScalarField| {
            let mut out = a.clone();
            out.scale(1.0 - t);
            out.axpy(t, b);
            out
        };
        FieldState {
            r: mix(&self.r, &other.r),
            u: VectorField {
                x: mix(&self.u.x, &other.u.x),
                y: mix(&self.u.y, &other.u.y),
            },
            z: mix(&self.z, &other.z),
            w: self
                .w
                .iter()
                .zip(&other.w)
                .map(|(a, b)| mix(a, b))
                .collect(),
            m: self.m,
        }
    }
}

#[derive(Debug, Error)]
pub enum SubsolverError {
    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("density left the positivity band: M + r = {value:.3e} outside ({lo:.3e}, {hi:.3e})")]
    DensityExit { value: f64, lo: f64, hi: f64 },
    #[error("{solver} iterate exceeded the overflow guard: |{value:.3e}| > {OVERFLOW_GUARD}")]
    OverflowGuard { solver: &'static str, value: f64 },
    #[error("singular linear system in {solver}: {source}")]
    SingularLinearSystem {
        solver: &'static str,
        #[source]
        source: LinalgError,
    },
}

/// Tolerances and iteration caps shared by the subsolvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsolverConfig {
    /// Relative residual tolerance for Newton solves.
    pub newton_tol: f64,
    /// Newton iteration cap.
    pub max_newton: usize,
    /// Relative residual tolerance for the flow Picard iteration.
    pub picard_tol: f64,
    /// Flow Picard iteration cap.
    pub max_picard: usize,
    /// Line-search backtracking factor.
    pub backtrack: f64,
    /// Discretization of first-order convection terms.
    pub convection: ConvectionScheme,
    /// Colocated-grid pressure stabilization constant for the flow system.
    pub stab: f64,
}

impl Default for SubsolverConfig {
    fn default() -> Self {
        SubsolverConfig {
            newton_tol: 1e-10,
            max_newton: 50,
            picard_tol: 1e-10,
            max_picard: 50,
            backtrack: 0.5,
            convection: ConvectionScheme::Upwind,
            stab: 0.1,
        }
    }
}

/// Convergence record of one subsolve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsolveStats {
    pub solver: String,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Residual norm after each accepted step, starting with the initial one.
    pub residual_history: Vec<f64>,
    /// Number of fresh matrix factorizations performed.
    pub factorizations: usize,
}

impl SubsolveStats {
    pub fn new(solver: &'static str, initial_residual: f64) -> Self {
        SubsolveStats {
            solver: solver.to_string(),
            iterations: 0,
            initial_residual,
            final_residual: initial_residual,
            residual_history: vec![initial_residual],
            factorizations: 0,
        }
    }

    pub fn push(&mut self, residual: f64) {
        self.iterations += 1;
        self.final_residual = residual;
        self.residual_history.push(residual);
    }

    /// Residual reduction of the last accepted step.
    pub fn last_step_ratio(&self) -> Option<f64> {
        let n = self.residual_history.len();
        if n < 2 {
            return None;
        }
        let prev = self.residual_history[n - 2];
        if prev == 0.0 {
            return None;
        }
        Some(self.residual_history[n - 1] / prev)
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
