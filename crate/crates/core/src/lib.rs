//! Desk-scale solver for the steady compressible heat-conducting
//! chemically-reacting mixture system.
//!
//! The construction follows a regularized log-variable formulation: the
//! nonlinear system is embedded in a homotopy family whose decoupled end is
//! uniquely solvable, the homotopy parameter is swept to the physical
//! coupling, and the regularization is removed by continuation with the
//! species regularization slaved to the cube of the primary one. A
//! diagnostics layer verifies entropy production, balance laws, and the
//! bound ledger on every converged state.
//!
//! Module map:
//! - [`mixture`] - pointwise constitutive closures and production rates
//! - [`grid`] - structured rectangle discretization, operators, norms
//! - [`linalg`] - banded direct solvers
//! - [`subsolvers`] - the flow, species, and thermal elliptic subproblems
//! - [`homotopy`] - fixed-point driver, continuation schedules, membership
//! - [`diagnostics`] - entropy production, balances, defect and bound ledger

pub mod diagnostics;
pub mod grid;
pub mod homotopy;
pub mod linalg;
pub mod mixture;
pub mod subsolvers;
