//! Flow subproblem: continuity and momentum for the density perturbation
//! and velocity,
//!
//! ```text
//! div((M + r) u) = 0,
//! lam rho u_bar . grad u - div S(rho, grad u) + grad pi(rho, theta_eff) = rho f,
//! ```
//!
//! with impermeable slip walls: `u . n = 0` strongly and the tangential
//! stress balanced by friction, `n . S . tau + f_fric u . tau = 0`. The mean
//! of `r` is pinned to zero.
//!
//! Discretization: colocated nodes, conservative face fluxes for continuity
//! and stress divergence, centered pressure gradients, and a small pressure
//! stabilization on the continuity equation that removes the odd-even
//! nullspace of the colocated layout. One scalar constraint (zero mean of
//! `r`) closes the rank through a bordered solve.
//!
//! The nonlinear iteration is Picard-type defect correction: the banded
//! factorization of a frozen linearization is reused across iterations and
//! across calls (the homotopy driver keeps one per continuation stage),
//! refreshed when the contraction stalls. Residuals are always the full
//! nonlinear ones, so reuse affects iteration counts only.

use crate::grid::{ConvectionScheme, GridSpec, ScalarField, VectorField};
use crate::linalg::{BandMatrix, BorderedLu};
use crate::mixture::MixtureSpec;

use super::{l2_norm, SubsolveStats, SubsolverConfig, SubsolverError};

/// Data for one flow solve.
pub struct FlowInputs<'a> {
    pub lambda: f64,
    pub m: f64,
    /// Barred velocity (coefficient of the frozen convection).
    pub u_bar: &'a VectorField,
    /// Effective temperature entering the pressure: `lam e^{z_bar} / g`.
    pub theta_eff: &'a ScalarField,
    /// Specific force; enters the momentum equation as `rho f`.
    pub force: &'a VectorField,
    /// Manufactured continuity source (verification only); projected to a
    /// compatible mean internally.
    pub mass_source: Option<&'a ScalarField>,
    /// Manufactured momentum source (verification only).
    pub momentum_source: Option<&'a VectorField>,
}

/// Reusable factorization cache; keep one per continuation stage.
#[derive(Default)]
pub struct FlowWorkspace {
    cached: Option<BorderedLu>,
}

impl FlowWorkspace {
    pub fn new() -> Self {
        FlowWorkspace { cached: None }
    }

    pub fn invalidate(&mut self) {
        self.cached = None;
    }
}

const DOF_R: usize = 0;
const DOF_U: usize = 1;
const DOF_V: usize = 2;

#[inline]
fn dof(node: usize, c: usize) -> usize {
    3 * node + c
}

struct FlowAssembler<'a> {
    grid: &'a GridSpec,
    spec: &'a MixtureSpec,
    inputs: &'a FlowInputs<'a>,
    config: &'a SubsolverConfig,
    vol: Vec<f64>,
    /// Projected mass source (zero weighted sum; compatible).
    mass_src: Vec<f64>,
    dir_scale: f64,
    /// Diagonal shift pinning the constant-density direction of the matrix;
    /// the outer defect iteration removes its effect from the solution.
    sigma: f64,
    hbar2: f64,
}

impl<'a> FlowAssembler<'a> {
    fn new(
        grid: &'a GridSpec,
        spec: &'a MixtureSpec,
        inputs: &'a FlowInputs<'a>,
        config: &'a SubsolverConfig,
    ) -> Self {
        let nn = grid.n_nodes();
        let mut vol = vec![0.0; nn];
        for j in 0..=grid.ny {
            for i in 0..=grid.nx {
                vol[grid.idx(i, j)] = grid.volume(i, j);
            }
        }
        let mut mass_src = vec![0.0; nn];
        if let Some(ms) = inputs.mass_source {
            let total: f64 = vol.iter().zip(ms.values()).map(|(v, m)| v * m).sum();
            let area: f64 = vol.iter().sum();
            let shift = total / area;
            for (out, m) in mass_src.iter_mut().zip(ms.values()) {
                *out = m - shift;
            }
        }
        let hbar2 = 0.5 * (grid.hx().powi(2) + grid.hy().powi(2));
        let pi_scale = spec.gamma * inputs.m.powf(spec.gamma - 1.0);
        FlowAssembler {
            grid,
            spec,
            inputs,
            config,
            vol,
            mass_src,
            dir_scale: inputs.m,
            sigma: 1e-8 * (1.0 + pi_scale),
            hbar2,
        }
    }

    #[inline]
    fn rho(&self, r: &ScalarField, node: usize) -> f64 {
        self.inputs.m + r.get(node)
    }

    #[inline]
    fn pressure(&self, r: &ScalarField, node: usize) -> f64 {
        let rho = self.rho(r, node);
        rho.powf(self.spec.gamma) + rho * self.inputs.theta_eff.get(node)
    }

    #[inline]
    fn dpressure(&self, r: &ScalarField, node: usize) -> f64 {
        let rho = self.rho(r, node);
        self.spec.gamma * rho.powf(self.spec.gamma - 1.0) + self.inputs.theta_eff.get(node)
    }

    /// Stabilization coefficient `stab h^2 pi' / rho` per node.
    #[inline]
    fn stab_coeff(&self, r: &ScalarField, node: usize) -> f64 {
        self.config.stab * self.hbar2 * self.dpressure(r, node) / self.rho(r, node)
    }

    fn assemble(
        &self,
        r: &ScalarField,
        u: &VectorField,
        residual: &mut [f64],
        mut jac: Option<&mut BandMatrix>,
    ) {
        residual.fill(0.0);
        let g = self.grid;
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                self.continuity_row(r, u, i, j, residual, jac.as_deref_mut());
                let on_x_wall = i == 0 || i == g.nx;
                let on_y_wall = j == 0 || j == g.ny;
                if on_x_wall {
                    let n = g.idx(i, j);
                    let row = dof(n, DOF_U);
                    residual[row] = self.dir_scale * u.x.get(n);
                    if let Some(jm) = jac.as_deref_mut() {
                        jm.add(row, dof(n, DOF_U), self.dir_scale);
                    }
                } else {
                    self.momentum_x_row(r, u, i, j, residual, jac.as_deref_mut());
                }
                if on_y_wall {
                    let n = g.idx(i, j);
                    let row = dof(n, DOF_V);
                    residual[row] = self.dir_scale * u.y.get(n);
                    if let Some(jm) = jac.as_deref_mut() {
                        jm.add(row, dof(n, DOF_V), self.dir_scale);
                    }
                } else {
                    self.momentum_y_row(r, u, i, j, residual, jac.as_deref_mut());
                }
            }
        }
    }

    fn continuity_row(
        &self,
        r: &ScalarField,
        u: &VectorField,
        i: usize,
        j: usize,
        residual: &mut [f64],
        mut jac: Option<&mut BandMatrix>,
    ) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let (nx, ny) = (g.nx, g.ny);
        let n = g.idx(i, j);
        let row = dof(n, DOF_R);
        let lenx = if i == 0 || i == nx { 0.5 * hx } else { hx };
        let leny = if j == 0 || j == ny { 0.5 * hy } else { hy };
        let mut acc = -self.mass_src[n];

        // Mass fluxes (rho u) . n through the four faces; wall-normal faces
        // carry zero flux. The stabilization flux beta grad(r) rides along.
        let face =
            |m: usize, comp: usize, h: f64, len: f64, sign: f64, jac: Option<&mut BandMatrix>| {
                let (un, um) = if comp == DOF_U {
                    (u.x.get(n), u.x.get(m))
                } else {
                    (u.y.get(n), u.y.get(m))
                };
                let mass = 0.5 * (self.rho(r, n) * un + self.rho(r, m) * um);
                let bf = 0.5 * (self.stab_coeff(r, n) + self.stab_coeff(r, m));
                // -div(beta grad r): every face contributes -bf (r_m - r_n)/(h len).
                let f = mass * sign / len - bf * (r.get(m) - r.get(n)) / (h * len);
                if let Some(jm) = jac {
                    jm.add(row, dof(n, comp), sign * 0.5 * self.rho(r, n) / len);
                    jm.add(row, dof(m, comp), sign * 0.5 * self.rho(r, m) / len);
                    jm.add(row, dof(n, DOF_R), sign * 0.5 * un / len + bf / (h * len));
                    jm.add(row, dof(m, DOF_R), sign * 0.5 * um / len - bf / (h * len));
                }
                f
            };
        if i < nx {
            acc += face(g.idx(i + 1, j), DOF_U, hx, lenx, 1.0, jac.as_deref_mut());
        }
        if i > 0 {
            acc += face(g.idx(i - 1, j), DOF_U, hx, lenx, -1.0, jac.as_deref_mut());
        }
        if j < ny {
            acc += face(g.idx(i, j + 1), DOF_V, hy, leny, 1.0, jac.as_deref_mut());
        }
        if j > 0 {
            acc += face(g.idx(i, j - 1), DOF_V, hy, leny, -1.0, jac.as_deref_mut());
        }
        residual[row] = acc + self.sigma * r.get(n);
        if let Some(jm) = jac.as_deref_mut() {
            jm.add(row, dof(n, DOF_R), self.sigma);
        }
    }

    /// x-momentum at 0 < i < nx, any j; half-cell with friction flux at the
    /// south/north walls.
    fn momentum_x_row(
        &self,
        r: &ScalarField,
        u: &VectorField,
        i: usize,
        j: usize,
        residual: &mut [f64],
        mut jac: Option<&mut BandMatrix>,
    ) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let ny = g.ny;
        let n = g.idx(i, j);
        let row = dof(n, DOF_U);
        let leny = if j == 0 || j == ny { 0.5 * hy } else { hy };
        let mut acc = 0.0;

        // Normal stress faces: S11 = 2 rho du1/dx at (i +- 1/2, j).
        {
            let e = g.idx(i + 1, j);
            let w = g.idx(i - 1, j);
            let rho_e = 0.5 * (self.rho(r, n) + self.rho(r, e));
            let rho_w = 0.5 * (self.rho(r, w) + self.rho(r, n));
            let s11_e = 2.0 * rho_e * (u.x.get(e) - u.x.get(n)) / hx;
            let s11_w = 2.0 * rho_w * (u.x.get(n) - u.x.get(w)) / hx;
            acc -= (s11_e - s11_w) / hx;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(e, DOF_U), -2.0 * rho_e / (hx * hx));
                jm.add(row, dof(n, DOF_U), 2.0 * (rho_e + rho_w) / (hx * hx));
                jm.add(row, dof(w, DOF_U), -2.0 * rho_w / (hx * hx));
            }
        }

        // Shear stress faces: S12 = rho (du1/dy + du2/dx) at (i, j +- 1/2);
        // at the walls the face value is the friction flux.
        // North face.
        if j < ny {
            let m = g.idx(i, j + 1);
            let rho_f = 0.5 * (self.rho(r, n) + self.rho(r, m));
            let du1dy = (u.x.get(m) - u.x.get(n)) / hy;
            let du2dx_lo = (u.y.get(g.idx(i + 1, j)) - u.y.get(g.idx(i - 1, j))) / (2.0 * hx);
            let du2dx_hi =
                (u.y.get(g.idx(i + 1, j + 1)) - u.y.get(g.idx(i - 1, j + 1))) / (2.0 * hx);
            let s12 = rho_f * (du1dy + 0.5 * (du2dx_lo + du2dx_hi));
            acc -= s12 / leny;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(m, DOF_U), -rho_f / (hy * leny));
                jm.add(row, dof(n, DOF_U), rho_f / (hy * leny));
                for (node2, sgn) in [
                    (g.idx(i + 1, j), 1.0),
                    (g.idx(i - 1, j), -1.0),
                    (g.idx(i + 1, j + 1), 1.0),
                    (g.idx(i - 1, j + 1), -1.0),
                ] {
                    jm.add(row, dof(node2, DOF_V), -rho_f * sgn / (4.0 * hx * leny));
                }
            }
        } else {
            // Wall flux S12(Ly) = -f u1.
            let s12 = -self.spec.f_fric * u.x.get(n);
            acc -= s12 / leny;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_U), self.spec.f_fric / leny);
            }
        }
        // South face.
        if j > 0 {
            let m = g.idx(i, j - 1);
            let rho_f = 0.5 * (self.rho(r, m) + self.rho(r, n));
            let du1dy = (u.x.get(n) - u.x.get(m)) / hy;
            let du2dx_lo =
                (u.y.get(g.idx(i + 1, j - 1)) - u.y.get(g.idx(i - 1, j - 1))) / (2.0 * hx);
            let du2dx_hi = (u.y.get(g.idx(i + 1, j)) - u.y.get(g.idx(i - 1, j))) / (2.0 * hx);
            let s12 = rho_f * (du1dy + 0.5 * (du2dx_lo + du2dx_hi));
            acc += s12 / leny;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_U), rho_f / (hy * leny));
                jm.add(row, dof(m, DOF_U), -rho_f / (hy * leny));
                for (node2, sgn) in [
                    (g.idx(i + 1, j - 1), 1.0),
                    (g.idx(i - 1, j - 1), -1.0),
                    (g.idx(i + 1, j), 1.0),
                    (g.idx(i - 1, j), -1.0),
                ] {
                    jm.add(row, dof(node2, DOF_V), rho_f * sgn / (4.0 * hx * leny));
                }
            }
        } else {
            // Wall flux S12(0) = +f u1.
            let s12 = self.spec.f_fric * u.x.get(n);
            acc += s12 / leny;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_U), self.spec.f_fric / leny);
            }
        }

        // Pressure gradient, centered.
        {
            let e = g.idx(i + 1, j);
            let w = g.idx(i - 1, j);
            acc += (self.pressure(r, e) - self.pressure(r, w)) / (2.0 * hx);
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(e, DOF_R), self.dpressure(r, e) / (2.0 * hx));
                jm.add(row, dof(w, DOF_R), -self.dpressure(r, w) / (2.0 * hx));
            }
        }

        // Convection lam rho (u_bar . grad u1).
        if self.inputs.lambda != 0.0 {
            self.convection(r, &u.x, i, j, row, DOF_U, &mut acc, jac.as_deref_mut());
        }

        // Force and manufactured source.
        acc -= self.rho(r, n) * self.inputs.force.x.get(n);
        if let Some(ms) = self.inputs.momentum_source {
            acc -= ms.x.get(n);
        }
        residual[row] = acc;
    }

    /// y-momentum at 0 < j < ny, any i; mirror image of `momentum_x_row`.
    fn momentum_y_row(
        &self,
        r: &ScalarField,
        u: &VectorField,
        i: usize,
        j: usize,
        residual: &mut [f64],
        mut jac: Option<&mut BandMatrix>,
    ) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let nx = g.nx;
        let n = g.idx(i, j);
        let row = dof(n, DOF_V);
        let lenx = if i == 0 || i == nx { 0.5 * hx } else { hx };
        let mut acc = 0.0;

        // Normal stress faces: S22 = 2 rho du2/dy at (i, j +- 1/2).
        {
            let nn_ = g.idx(i, j + 1);
            let ss = g.idx(i, j - 1);
            let rho_n = 0.5 * (self.rho(r, n) + self.rho(r, nn_));
            let rho_s = 0.5 * (self.rho(r, ss) + self.rho(r, n));
            let s22_n = 2.0 * rho_n * (u.y.get(nn_) - u.y.get(n)) / hy;
            let s22_s = 2.0 * rho_s * (u.y.get(n) - u.y.get(ss)) / hy;
            acc -= (s22_n - s22_s) / hy;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(nn_, DOF_V), -2.0 * rho_n / (hy * hy));
                jm.add(row, dof(n, DOF_V), 2.0 * (rho_n + rho_s) / (hy * hy));
                jm.add(row, dof(ss, DOF_V), -2.0 * rho_s / (hy * hy));
            }
        }

        // Shear stress faces: S21 = rho (du2/dx + du1/dy) at (i +- 1/2, j).
        // East face.
        if i < nx {
            let m = g.idx(i + 1, j);
            let rho_f = 0.5 * (self.rho(r, n) + self.rho(r, m));
            let du2dx = (u.y.get(m) - u.y.get(n)) / hx;
            let du1dy_lo = (u.x.get(g.idx(i, j + 1)) - u.x.get(g.idx(i, j - 1))) / (2.0 * hy);
            let du1dy_hi =
                (u.x.get(g.idx(i + 1, j + 1)) - u.x.get(g.idx(i + 1, j - 1))) / (2.0 * hy);
            let s21 = rho_f * (du2dx + 0.5 * (du1dy_lo + du1dy_hi));
            acc -= s21 / lenx;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(m, DOF_V), -rho_f / (hx * lenx));
                jm.add(row, dof(n, DOF_V), rho_f / (hx * lenx));
                for (node2, sgn) in [
                    (g.idx(i, j + 1), 1.0),
                    (g.idx(i, j - 1), -1.0),
                    (g.idx(i + 1, j + 1), 1.0),
                    (g.idx(i + 1, j - 1), -1.0),
                ] {
                    jm.add(row, dof(node2, DOF_U), -rho_f * sgn / (4.0 * hy * lenx));
                }
            }
        } else {
            let s21 = -self.spec.f_fric * u.y.get(n);
            acc -= s21 / lenx;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_V), self.spec.f_fric / lenx);
            }
        }
        // West face.
        if i > 0 {
            let m = g.idx(i - 1, j);
            let rho_f = 0.5 * (self.rho(r, m) + self.rho(r, n));
            let du2dx = (u.y.get(n) - u.y.get(m)) / hx;
            let du1dy_lo =
                (u.x.get(g.idx(i - 1, j + 1)) - u.x.get(g.idx(i - 1, j - 1))) / (2.0 * hy);
            let du1dy_hi = (u.x.get(g.idx(i, j + 1)) - u.x.get(g.idx(i, j - 1))) / (2.0 * hy);
            let s21 = rho_f * (du2dx + 0.5 * (du1dy_lo + du1dy_hi));
            acc += s21 / lenx;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_V), rho_f / (hx * lenx));
                jm.add(row, dof(m, DOF_V), -rho_f / (hx * lenx));
                for (node2, sgn) in [
                    (g.idx(i - 1, j + 1), 1.0),
                    (g.idx(i - 1, j - 1), -1.0),
                    (g.idx(i, j + 1), 1.0),
                    (g.idx(i, j - 1), -1.0),
                ] {
                    jm.add(row, dof(node2, DOF_U), rho_f * sgn / (4.0 * hy * lenx));
                }
            }
        } else {
            let s21 = self.spec.f_fric * u.y.get(n);
            acc += s21 / lenx;
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(n, DOF_V), self.spec.f_fric / lenx);
            }
        }

        // Pressure gradient, centered.
        {
            let nn_ = g.idx(i, j + 1);
            let ss = g.idx(i, j - 1);
            acc += (self.pressure(r, nn_) - self.pressure(r, ss)) / (2.0 * hy);
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(row, dof(nn_, DOF_R), self.dpressure(r, nn_) / (2.0 * hy));
                jm.add(row, dof(ss, DOF_R), -self.dpressure(r, ss) / (2.0 * hy));
            }
        }

        if self.inputs.lambda != 0.0 {
            self.convection(r, &u.y, i, j, row, DOF_V, &mut acc, jac.as_deref_mut());
        }

        acc -= self.rho(r, n) * self.inputs.force.y.get(n);
        if let Some(ms) = self.inputs.momentum_source {
            acc -= ms.y.get(n);
        }
        residual[row] = acc;
    }

    /// Adds `lam rho (u_bar . grad v)` for the unknown component `v` stored
    /// at `comp`. Centered differences fall back to first order one-sided at
    /// the walls, where the barred normal velocity vanishes anyway.
    #[allow(clippy::too_many_arguments)]
    fn convection(
        &self,
        r: &ScalarField,
        v: &ScalarField,
        i: usize,
        j: usize,
        row: usize,
        comp: usize,
        acc: &mut f64,
        mut jac: Option<&mut BandMatrix>,
    ) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let (nx, ny) = (g.nx, g.ny);
        let n = g.idx(i, j);
        let coef = self.inputs.lambda * self.rho(r, n);
        let bx = coef * self.inputs.u_bar.x.get(n);
        let by = coef * self.inputs.u_bar.y.get(n);

        let mut add_dir = |b: f64,
                           idx_lo: Option<usize>,
                           idx_hi: Option<usize>,
                           h: f64,
                           jac: Option<&mut BandMatrix>| {
            // Stencil over (lo, self, hi) for d/d(direction).
            let (w_lo, w_self, w_hi) =
                match (self.config.convection, idx_lo.is_some(), idx_hi.is_some()) {
                    (_, false, true) => (0.0, -1.0 / h, 1.0 / h),
                    (_, true, false) => (-1.0 / h, 1.0 / h, 0.0),
                    (ConvectionScheme::Centered, true, true) => (-0.5 / h, 0.0, 0.5 / h),
                    (ConvectionScheme::Upwind, true, true) => {
                        if b >= 0.0 {
                            (-1.0 / h, 1.0 / h, 0.0)
                        } else {
                            (0.0, -1.0 / h, 1.0 / h)
                        }
                    }
                    (_, false, false) => unreachable!("grid has at least 8 cells"),
                };
            let mut d = w_self * v.get(n);
            if let Some(lo) = idx_lo {
                d += w_lo * v.get(lo);
            }
            if let Some(hi) = idx_hi {
                d += w_hi * v.get(hi);
            }
            *acc += b * d;
            if let Some(jm) = jac {
                jm.add(row, dof(n, comp), b * w_self);
                if let Some(lo) = idx_lo {
                    jm.add(row, dof(lo, comp), b * w_lo);
                }
                if let Some(hi) = idx_hi {
                    jm.add(row, dof(hi, comp), b * w_hi);
                }
            }
        };
        let lo_x = if i > 0 { Some(g.idx(i - 1, j)) } else { None };
        let hi_x = if i < nx { Some(g.idx(i + 1, j)) } else { None };
        add_dir(bx, lo_x, hi_x, hx, jac.as_deref_mut());
        let lo_y = if j > 0 { Some(g.idx(i, j - 1)) } else { None };
        let hi_y = if j < ny { Some(g.idx(i, j + 1)) } else { None };
        add_dir(by, lo_y, hi_y, hy, jac.as_deref_mut());
    }

    fn factor(&self, r: &ScalarField, u: &VectorField) -> Result<BorderedLu, SubsolverError> {
        let g = self.grid;
        let ndof = 3 * g.n_nodes();
        let band = 3 * (g.nx + 2) + 2;
        let mut jac = BandMatrix::new(ndof, band, band);
        let mut scratch = vec![0.0; ndof];
        self.assemble(r, u, &mut scratch, Some(&mut jac));
        // Border: the compatibility direction feeds the continuity rows, the
        // constraint pins the weighted mean of r.
        let mut c = vec![0.0; ndof];
        let mut d = vec![0.0; ndof];
        for node in 0..g.n_nodes() {
            c[dof(node, DOF_R)] = self.vol[node];
            d[dof(node, DOF_R)] = self.vol[node];
        }
        BorderedLu::new(jac, &c, d).map_err(|e| SubsolverError::SingularLinearSystem {
            solver: "flow",
            source: e,
        })
    }

    fn project_mean(&self, r: &mut ScalarField) {
        let total: f64 = self.vol.iter().zip(r.values()).map(|(v, x)| v * x).sum();
        let area: f64 = self.vol.iter().sum();
        let mean = total / area;
        for x in r.values_mut() {
            *x -= mean;
        }
    }

    fn density_check(&self, r: &ScalarField) -> Result<(), SubsolverError> {
        let m = self.inputs.m;
        for &x in r.values() {
            let rho = m + x;
            if !(rho > 0.5 * m) || !(rho < 1.5 * m) {
                return Err(SubsolverError::DensityExit {
                    value: rho,
                    lo: 0.5 * m,
                    hi: 1.5 * m,
                });
            }
        }
        Ok(())
    }
}

/// Evaluates the nonlinear flow residual at a given state; test support.
#[doc(hidden)]
pub fn flow_residual(
    grid: &GridSpec,
    spec: &MixtureSpec,
    inputs: &FlowInputs<'_>,
    r: &ScalarField,
    u: &VectorField,
    config: &SubsolverConfig,
) -> Vec<f64> {
    let asm = FlowAssembler::new(grid, spec, inputs, config);
    let mut res = vec![0.0; 3 * grid.n_nodes()];
    asm.assemble(r, u, &mut res, None);
    res
}

/// Solves the flow subproblem; returns the mean-zero density perturbation
/// and the velocity.
pub fn solve_flow(
    grid: &GridSpec,
    spec: &MixtureSpec,
    inputs: &FlowInputs<'_>,
    init: Option<(&ScalarField, &VectorField)>,
    workspace: &mut FlowWorkspace,
    config: &SubsolverConfig,
) -> Result<(ScalarField, VectorField, SubsolveStats), SubsolverError> {
    let asm = FlowAssembler::new(grid, spec, inputs, config);
    let ndof = 3 * grid.n_nodes();

    let (mut r, mut u) = match init {
        Some((r0, u0)) => (r0.clone(), u0.clone()),
        None => (ScalarField::zeros(grid), VectorField::zeros(grid)),
    };
    asm.project_mean(&mut r);
    asm.density_check(&r)?;

    let mut res = vec![0.0; ndof];
    asm.assemble(&r, &u, &mut res, None);
    let res0 = l2_norm(&res);
    let mut stats = SubsolveStats::new("flow", res0);
    // Warm starts must not tighten the tolerance below the cold problem's
    // data scale; the rounding floor of the assembly sits well above
    // picard_tol times a near-zero warm residual on fine grids.
    let cold_scale = if init.is_some() {
        let r0 = ScalarField::zeros(grid);
        let u0 = VectorField::zeros(grid);
        let mut cold = vec![0.0; ndof];
        asm.assemble(&r0, &u0, &mut cold, None);
        l2_norm(&cold)
    } else {
        res0
    };
    // Backward-error floor: the dominant rounding in the assembled residual
    // comes from differencing the pressure (magnitude M^gamma) across a
    // cell, with the viscous fluxes next. Below a few of these ulps the
    // residual cannot be driven no matter how good the step.
    let floor = {
        let n_nodes = grid.n_nodes() as f64;
        let hmin = grid.hx().min(grid.hy());
        let pi_max = asm.pressure(
            &r,
            (0..grid.n_nodes())
                .max_by(|&a, &b| asm.pressure(&r, a).total_cmp(&asm.pressure(&r, b)))
                .unwrap_or(0),
        );
        let u_max = u.x.max_abs().max(u.y.max_abs()).max(1e-3);
        let visc = 2.0 * (inputs.m * 1.5) * u_max / (hmin * hmin);
        f64::EPSILON * (pi_max / (2.0 * hmin) + visc) * (2.0 * n_nodes).sqrt()
    };
    let target = (config.picard_tol * (1.0 + res0.max(cold_scale))).max(8.0 * floor);
    // Residuals below this band count as the rounding floor when progress
    // stops; genuine stalls sit orders of magnitude higher.
    let grace = 50.0 * target;
    let mut res_norm = res0;
    let mut fresh_tried = false;
    let mut slow_steps = 0usize;
    let mut linear_solves = 0usize;

    while res_norm > target {
        if linear_solves >= config.max_picard {
            return Err(SubsolverError::NonConvergence {
                solver: "flow",
                residual: res_norm,
                iterations: linear_solves,
            });
        }
        if workspace.cached.is_none() {
            workspace.cached = Some(asm.factor(&r, &u)?);
            stats.factorizations += 1;
            fresh_tried = true;
        }
        let lu = workspace.cached.as_ref().expect("factorization present");
        let mut step = res.clone();
        for x in &mut step {
            *x = -*x;
        }
        lu.solve_in_place(&mut step, 0.0);
        linear_solves += 1;

        if std::env::var_os("MIXSTEADY_FLOW_TRACE").is_some() {
            let mut worst = (0.0f64, 0usize, 0usize, 0usize);
            for j in 0..=grid.ny {
                for i in 0..=grid.nx {
                    for c in 0..3 {
                        let v = res[dof(grid.idx(i, j), c)].abs();
                        if v > worst.0 {
                            worst = (v, i, j, c);
                        }
                    }
                }
            }
            eprintln!(
                "flow iter {linear_solves}: res {res_norm:e} fresh {fresh_tried} worst {worst:?}"
            );
        }
        // Backtracking on the nonlinear residual.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut r_try = r.clone();
            let mut u_try = u.clone();
            for node in 0..grid.n_nodes() {
                *r_try.values_mut().get_mut(node).unwrap() += t * step[dof(node, DOF_R)];
                *u_try.x.values_mut().get_mut(node).unwrap() += t * step[dof(node, DOF_U)];
                *u_try.y.values_mut().get_mut(node).unwrap() += t * step[dof(node, DOF_V)];
            }
            asm.project_mean(&mut r_try);
            asm.assemble(&r_try, &u_try, &mut res, None);
            let trial = l2_norm(&res);
            if trial.is_finite() && trial <= (1.0 - 1e-4 * t) * res_norm {
                r = r_try;
                u = u_try;
                res_norm = trial;
                accepted = true;
                break;
            }
            t *= config.backtrack;
        }
        if !accepted {
            if !fresh_tried {
                // The cached linearization is stale; rebuild at the current
                // iterate and retry.
                workspace.invalidate();
                asm.assemble(&r, &u, &mut res, None);
                continue;
            }
            // No descent from a fresh factorization: the rounding floor if
            // we are within the grace band, a genuine stall otherwise.
            if res_norm <= grace {
                break;
            }
            return Err(SubsolverError::NonConvergence {
                solver: "flow",
                residual: res_norm,
                iterations: linear_solves,
            });
        }
        asm.density_check(&r)?;
        stats.push(res_norm);
        let ratio = stats.last_step_ratio().unwrap_or(0.0);
        if ratio > 0.9 {
            slow_steps += 1;
            if slow_steps >= 2 {
                if res_norm <= grace {
                    break;
                }
                if fresh_tried {
                    return Err(SubsolverError::NonConvergence {
                        solver: "flow",
                        residual: res_norm,
                        iterations: linear_solves,
                    });
                }
                workspace.invalidate();
                slow_steps = 0;
            }
        } else {
            slow_steps = 0;
            if ratio > 0.5 && !fresh_tried {
                // Moderate contraction with a stale matrix: refresh it.
                workspace.invalidate();
            } else if ratio <= 0.5 {
                fresh_tried = false;
            }
        }
    }
    Ok((r, u, stats))
}
