//! The outer construction: damped fixed-point iteration of the solution
//! operator, the coupling sweep from the decoupled end to the physical
//! system, and the vanishing-regularization continuation with the species
//! regularization slaved to the cube of the primary one. Membership of the
//! converged states in the solution balls is checked against configured radii.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    diagnose, summarize, DiagnosticsInputs, DiagnosticsReport, DiagnosticsSummary,
};
use crate::grid::{
    gradient, integrate_boundary, norm, BoundaryField, GridSpec, NormKind, ScalarField, VectorField,
};
use crate::mixture::{cap_function, MixtureSpec};
use crate::subsolvers::{
    solve_flow, solve_species, solve_thermal, FieldState, FlowInputs, FlowWorkspace, SpeciesInit,
    SpeciesInputs, SubsolveStats, SubsolverConfig, SubsolverError, ThermalInputs,
};

#[derive(Debug, Error)]
pub enum HomotopyError {
    #[error("invalid continuation parameters: {0}")]
    BadParams(String),
    #[error("mean density {m} below the configured minimum {m_min}")]
    DensityTooLow { m: f64, m_min: f64 },
    #[error("fixed point not reached at (lambda = {lambda}, delta = {delta}): update {update:.3e} after {iterations} iterations")]
    MaxIterations {
        lambda: f64,
        delta: f64,
        update: f64,
        iterations: usize,
    },
    #[error("subsolver failed at (lambda = {lambda}, delta = {delta}): {source}")]
    Subsolver {
        lambda: f64,
        delta: f64,
        #[source]
        source: SubsolverError,
    },
}

/// Continuation schedules and fixed-point controls. The species
/// regularization is always the cube of the primary one and is never stored
/// or configured independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationParams {
    /// Mean density.
    pub m: f64,
    /// Refusal threshold for the mean density.
    pub m_min: f64,
    /// Increasing grid in [0, 1]; must start at 0 and end at 1.
    pub lambda_schedule: Vec<f64>,
    /// Decreasing positive grid.
    pub delta_schedule: Vec<f64>,
    /// Cap constant of the norm limiter.
    pub c0: f64,
    /// Solution-ball radius for the energy-type norms.
    pub e_radius: f64,
    /// Solution-ball radius for the strong norms.
    pub cf_radius: f64,
    /// Damping of the fixed-point iteration, in (0, 1].
    pub damping: f64,
    /// Fixed-point tolerance in the composite norm.
    pub fp_tol: f64,
    /// Fixed-point iteration cap.
    pub max_fp: usize,
    /// Lebesgue exponent of the solution norm (> 3).
    pub p: f64,
}

impl Default for ContinuationParams {
    fn default() -> Self {
        let lambda_schedule = (0..=10).map(|k| k as f64 / 10.0).collect();
        // 0.1 down to 1e-3, log-uniform.
        let delta_schedule = (0..5).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect();
        ContinuationParams {
            m: 100.0,
            m_min: 10.0,
            lambda_schedule,
            delta_schedule,
            c0: 10.0,
            e_radius: 10.0,
            cf_radius: 40.0,
            damping: 0.5,
            fp_tol: 1e-8,
            max_fp: 200,
            p: 4.0,
        }
    }
}

impl ContinuationParams {
    /// The slaved species regularization.
    #[inline]
    pub fn epsilon(delta: f64) -> f64 {
        delta.powi(3)
    }

    pub fn validate(&self) -> Result<(), HomotopyError> {
        let bad = |msg: String| Err(HomotopyError::BadParams(msg));
        if !(self.m > 0.0) {
            return bad(format!("mean density M = {} must be positive", self.m));
        }
        if self.lambda_schedule.first() != Some(&0.0) || self.lambda_schedule.last() != Some(&1.0) {
            return bad("lambda schedule must start at 0 and end at 1".into());
        }
        if self.lambda_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("lambda schedule must be strictly increasing".into());
        }
        if self.delta_schedule.is_empty() || self.delta_schedule.iter().any(|&d| !(d > 0.0)) {
            return bad("delta schedule must be nonempty and positive".into());
        }
        if self.delta_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("delta schedule must be strictly decreasing".into());
        }
        if !(self.c0 > 0.0) || !(self.e_radius > 0.0) || !(self.cf_radius > 0.0) {
            return bad("C0, E, C_f must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping {} outside (0, 1]", self.damping));
        }
        if !(self.fp_tol > 0.0) || self.max_fp == 0 {
            return bad("fixed-point tolerance and iteration cap must be positive".into());
        }
        if !(self.p > 3.0) {
            return bad(format!(
                "solution-norm exponent p = {} must exceed 3",
                self.p
            ));
        }
        Ok(())
    }
}

/// Manufactured forcing terms appended to every subproblem; used by the
/// verification harness only.
pub struct ExtraSources {
    pub mass: ScalarField,
    pub momentum: VectorField,
    pub species: Vec<ScalarField>,
    pub thermal: ScalarField,
}

/// Problem data: the specific force and the outer temperature.
pub struct ProblemData {
    pub force: VectorField,
    pub theta_bc: BoundaryField,
    pub extra: Option<ExtraSources>,
}

impl ProblemData {
    pub fn new(force: VectorField, theta_bc: BoundaryField) -> Self {
        ProblemData {
            force,
            theta_bc,
            extra: None,
        }
    }

    /// Boundary-averaged outer temperature (the canonical start value).
    pub fn theta_mean(&self, grid: &GridSpec) -> f64 {
        let mut field = ScalarField::zeros(grid);
        for (i, j) in grid.boundary_nodes() {
            *field.at_mut(i, j) = self
                .theta_bc
                .get(grid.boundary_index(i, j).expect("boundary"));
        }
        let perimeter = 2.0 * (grid.lx + grid.ly);
        integrate_boundary(grid, &field) / perimeter
    }
}

/// Membership verdicts for the four solution balls, with measured values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MembershipReport {
    pub u_grad_l2: f64,
    pub u_strong: f64,
    pub in_m_u: bool,
    pub r_weighted: f64,
    pub r_mean: f64,
    pub in_m_r: bool,
    pub theta_energy: f64,
    pub theta_strong: f64,
    pub in_m_theta: bool,
    pub y_energy: f64,
    pub y_grad_p: f64,
    pub in_m_y: bool,
}

/// Evaluates the solution-ball memberships at the configured radii.
pub fn check_membership(
    grid: &GridSpec,
    state: &FieldState,
    spec: &MixtureSpec,
    params: &ContinuationParams,
) -> MembershipReport {
    let p = params.p;
    let gux = gradient(grid, &state.u.x);
    let guy = gradient(grid, &state.u.y);
    let grad_l2 = |v: &crate::grid::VectorField| {
        let mut mag = ScalarField::zeros(grid);
        for node in 0..grid.n_nodes() {
            mag.set(node, v.x.get(node).hypot(v.y.get(node)));
        }
        mag
    };
    let gux_mag = grad_l2(&gux);
    let guy_mag = grad_l2(&guy);
    let u_grad_l2 = norm(grid, &gux_mag, NormKind::Lp(2.0)).expect("p")
        + norm(grid, &guy_mag, NormKind::Lp(2.0)).expect("p");
    let u_strong = norm(grid, &gux_mag, NormKind::Lp(f64::INFINITY)).expect("p")
        + norm(grid, &guy_mag, NormKind::Lp(f64::INFINITY)).expect("p")
        + norm(grid, &state.u.x, NormKind::Lp(f64::INFINITY)).expect("p")
        + norm(grid, &state.u.y, NormKind::Lp(f64::INFINITY)).expect("p");

    let weight = state.m.powf(spec.gamma - 2.0);
    let grad_r = grad_l2(&gradient(grid, &state.r));
    let r_weighted = weight
        * (norm(grid, &state.r, NormKind::Lp(f64::INFINITY)).expect("p")
            + norm(grid, &grad_r, NormKind::Lp(p)).expect("p"));
    let mut r_mean = 0.0;
    let mut area = 0.0;
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            r_mean += grid.volume(i, j) * state.r.at(i, j);
            area += grid.volume(i, j);
        }
    }
    r_mean /= area;

    let theta = state.theta();
    let theta32 = theta.map(|t| t.powf(1.5));
    let grad_theta32 = grad_l2(&gradient(grid, &theta32));
    let theta_energy = norm(grid, &theta, NormKind::Lp(9.0)).expect("p").powf(1.5)
        + norm(grid, &grad_theta32, NormKind::Lp(2.0)).expect("p");
    let theta_strong = norm(grid, &theta, NormKind::W1p(p)).expect("p");

    let ys = state.mass_fractions();
    let y_energy: f64 = ys
        .iter()
        .map(|y| norm(grid, y, NormKind::W1p(2.0)).expect("p"))
        .sum();
    let y_grad_p: f64 = ys
        .iter()
        .map(|y| {
            let gy = grad_l2(&gradient(grid, y));
            norm(grid, &gy, NormKind::Lp(p)).expect("p")
        })
        .sum();

    MembershipReport {
        u_grad_l2,
        u_strong,
        in_m_u: u_grad_l2 <= params.e_radius && u_strong <= params.cf_radius,
        r_weighted,
        r_mean,
        in_m_r: r_weighted <= params.cf_radius,
        theta_energy,
        theta_strong,
        in_m_theta: theta_energy <= params.e_radius && theta_strong <= params.cf_radius,
        y_energy,
        y_grad_p,
        in_m_y: y_energy <= params.e_radius && y_grad_p <= params.cf_radius,
    }
}

/// Composite fixed-point norm: weighted W1p of the density perturbation plus
/// W1p of velocity components, temperature, and mass fractions.
pub fn composite_norm(
    grid: &GridSpec,
    a: &FieldState,
    b: &FieldState,
    spec: &MixtureSpec,
    p: f64,
) -> f64 {
    let weight = a.m.powf(spec.gamma - 2.0);
    let diff = |x: &ScalarField, y: &ScalarField| {
        let mut d = x.clone();
        d.axpy(-1.0, y);
        d
    };
    let mut total = weight * norm(grid, &diff(&a.r, &b.r), NormKind::W1p(p)).expect("p");
    total += norm(grid, &diff(&a.u.x, &b.u.x), NormKind::W1p(p)).expect("p");
    total += norm(grid, &diff(&a.u.y, &b.u.y), NormKind::W1p(p)).expect("p");
    total += norm(grid, &diff(&a.theta(), &b.theta()), NormKind::W1p(p)).expect("p");
    for (ya, yb) in a.mass_fractions().iter().zip(b.mass_fractions().iter()) {
        total += norm(grid, &diff(ya, yb), NormKind::W1p(p)).expect("p");
    }
    total
}

/// Convergence record of one continuation stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub lambda: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub fp_iterations: usize,
    pub final_update: f64,
    pub g_val: f64,
    pub flow: SubsolveStats,
    pub species: Vec<SubsolveStats>,
    pub thermal: SubsolveStats,
    pub membership: MembershipReport,
    pub snapshot: DiagnosticsSummary,
}

/// Full construction record: per-stage reports, the defect trace across the
/// regularization schedule, and the final diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub stages: Vec<StageReport>,
    /// (delta, mass defect in L2) at the coupled end of each delta stage.
    pub delta_trace: Vec<(f64, f64)>,
    pub final_diagnostics: Option<DiagnosticsReport>,
}

/// A failed construction still carries everything computed so far.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ConstructionFailure {
    pub error: HomotopyError,
    pub partial: ConstructionReport,
}

/// Output of one operator application, with per-subsolver records.
pub struct StageOutput {
    pub state: FieldState,
    pub g_val: f64,
    pub flow: SubsolveStats,
    pub species: Vec<SubsolveStats>,
    pub thermal: SubsolveStats,
}

/// One application of the solution operator: flow, then species, then
/// thermal, with the barred state supplying the frozen couplings.
#[allow(clippy::too_many_arguments)]
pub fn apply_f_lambda(
    grid: &GridSpec,
    spec: &MixtureSpec,
    state_bar: &FieldState,
    lambda: f64,
    delta: f64,
    params: &ContinuationParams,
    data: &ProblemData,
    config: &SubsolverConfig,
    flow_ws: &mut FlowWorkspace,
) -> Result<StageOutput, HomotopyError> {
    let eps = ContinuationParams::epsilon(delta);
    let wrap = |source: SubsolverError| HomotopyError::Subsolver {
        lambda,
        delta,
        source,
    };

    // Norm cap from the barred temperature.
    let theta_bar = state_bar.theta();
    let g_val = cap_function(
        norm(grid, &theta_bar, NormKind::W1p(params.p)).expect("p"),
        params.c0,
    );

    // Effective temperature entering the pressure: lam theta_bar / g.
    let theta_eff = theta_bar.map(|t| lambda * t / g_val);

    // At the decoupled end the operator ignores the barred state entirely;
    // the canonical start keeps its output independent of it bitwise.
    let theta_mean = data.theta_mean(grid);
    let canonical = FieldState::uniform_start(grid, params.m, spec.n, theta_mean);
    let init = if lambda == 0.0 { &canonical } else { state_bar };

    let flow_inputs = FlowInputs {
        lambda,
        m: params.m,
        u_bar: &state_bar.u,
        theta_eff: &theta_eff,
        force: &data.force,
        mass_source: data.extra.as_ref().map(|e| &e.mass),
        momentum_source: data.extra.as_ref().map(|e| &e.momentum),
    };
    let (r, u, flow_stats) = solve_flow(
        grid,
        spec,
        &flow_inputs,
        Some((&init.r, &init.u)),
        flow_ws,
        config,
    )
    .map_err(wrap)?;

    let rho = r.map(|v| params.m + v);
    let d_lambda = r.map(|v| spec.d0 * (params.m + lambda * v));
    let species_inputs = SpeciesInputs {
        lambda,
        rho: &rho,
        d_lambda: &d_lambda,
        u_bar: &state_bar.u,
        z_bar: &state_bar.z,
        w_bar: &state_bar.w,
        eps,
        delta,
        g_val,
        extra_source: data.extra.as_ref().map(|e| e.species.as_slice()),
    };
    let species_init = if lambda == 0.0 {
        SpeciesInit::Kirchhoff
    } else {
        SpeciesInit::Fields(&state_bar.w)
    };
    let (w, species_stats) =
        solve_species(grid, spec, &species_inputs, species_init, config).map_err(wrap)?;

    let thermal_inputs = ThermalInputs {
        lambda,
        m: params.m,
        rho: &rho,
        u: &u,
        z_bar: &state_bar.z,
        w_bar: &state_bar.w,
        w_new: &w,
        eps,
        delta,
        g_val,
        theta_bc: &data.theta_bc,
        extra_source: data.extra.as_ref().map(|e| &e.thermal),
    };
    let (z, thermal_stats) =
        solve_thermal(grid, spec, &thermal_inputs, &init.z, config).map_err(wrap)?;

    Ok(StageOutput {
        state: FieldState {
            r,
            u,
            z,
            w,
            m: params.m,
        },
        g_val,
        flow: flow_stats,
        species: species_stats,
        thermal: thermal_stats,
    })
}

/// Damped fixed-point iteration at one `(lambda, delta)` stage. At the
/// decoupled end the map ignores its argument, so the full step is taken
/// and convergence is declared on the second application.
#[allow(clippy::too_many_arguments)]
pub fn solve_at(
    grid: &GridSpec,
    spec: &MixtureSpec,
    lambda: f64,
    delta: f64,
    warm_start: &FieldState,
    params: &ContinuationParams,
    data: &ProblemData,
    config: &SubsolverConfig,
    flow_ws: &mut FlowWorkspace,
) -> Result<(FieldState, StageReport), HomotopyError> {
    let damping = if lambda == 0.0 { 1.0 } else { params.damping };
    let mut x = warm_start.clone();
    let mut last = None;
    let trace = std::env::var_os("MIXSTEADY_STAGE_TRACE").is_some();
    for iter in 1..=params.max_fp {
        let out = apply_f_lambda(grid, spec, &x, lambda, delta, params, data, config, flow_ws)?;
        let x_new = x.blend(&out.state, damping);
        let update = composite_norm(grid, &x_new, &x, spec, params.p);
        x = x_new;
        let done = update <= params.fp_tol;
        if trace {
            eprintln!(
                "stage (lambda {lambda:.2}, delta {delta:.4}) fp {iter}: update {update:.3e} flow {}its/{}f species {} thermal {}",
                out.flow.iterations,
                out.flow.factorizations,
                out.species.iter().map(|s| s.iterations).sum::<usize>(),
                out.thermal.iterations
            );
        }
        last = Some((out, update, iter));
        if done {
            break;
        }
    }
    let (out, update, iters) = last.expect("at least one iteration");
    if update > params.fp_tol {
        return Err(HomotopyError::MaxIterations {
            lambda,
            delta,
            update,
            iterations: iters,
        });
    }
    let membership = check_membership(grid, &x, spec, params);
    let snapshot = summarize(
        grid,
        &x,
        spec,
        &DiagnosticsInputs {
            theta_bc: &data.theta_bc,
            force: &data.force,
            lambda,
            delta,
            p: params.p,
            e_radius: params.e_radius,
            cf_radius: params.cf_radius,
        },
    );
    let report = StageReport {
        lambda,
        delta,
        epsilon: ContinuationParams::epsilon(delta),
        fp_iterations: iters,
        final_update: update,
        g_val: out.g_val,
        flow: out.flow,
        species: out.species,
        thermal: out.thermal,
        membership,
        snapshot,
    };
    Ok((x, report))
}

/// The full construction: for each regularization level, sweep the coupling
/// from the decoupled end to one, warm-starting every stage; the final state
/// is the coupled end at the smallest regularization.
pub fn run_construction(
    grid: &GridSpec,
    spec: &MixtureSpec,
    params: &ContinuationParams,
    data: &ProblemData,
    config: &SubsolverConfig,
) -> Result<(FieldState, ConstructionReport), Box<ConstructionFailure>> {
    let mut report = ConstructionReport {
        stages: Vec::new(),
        delta_trace: Vec::new(),
        final_diagnostics: None,
    };
    let fail = |error: HomotopyError, partial: ConstructionReport| {
        Err(Box::new(ConstructionFailure { error, partial }))
    };
    if let Err(e) = params.validate() {
        return fail(e, report);
    }
    if params.m < params.m_min {
        return fail(
            HomotopyError::DensityTooLow {
                m: params.m,
                m_min: params.m_min,
            },
            report,
        );
    }

    let theta_mean = data.theta_mean(grid);
    let mut state = FieldState::uniform_start(grid, params.m, spec.n, theta_mean);
    let mut flow_ws = FlowWorkspace::new();
    let mut final_lambda_delta = (0.0, params.delta_schedule[0]);

    for &delta in &params.delta_schedule {
        for &lambda in &params.lambda_schedule {
            match solve_at(
                grid,
                spec,
                lambda,
                delta,
                &state,
                params,
                data,
                config,
                &mut flow_ws,
            ) {
                Ok((next, stage)) => {
                    state = next;
                    report.stages.push(stage);
                }
                Err(error) => return fail(error, report),
            }
        }
        let (defect_l2, _) = crate::diagnostics::mass_defect(grid, &state);
        report.delta_trace.push((delta, defect_l2));
        final_lambda_delta = (1.0, delta);
    }

    let (lambda, delta) = final_lambda_delta;
    let diag_inputs = DiagnosticsInputs {
        theta_bc: &data.theta_bc,
        force: &data.force,
        lambda,
        delta,
        p: params.p,
        e_radius: params.e_radius,
        cf_radius: params.cf_radius,
    };
    report.final_diagnostics = Some(diagnose(grid, &state, spec, &diag_inputs));
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial_setup(n: usize) -> (GridSpec, MixtureSpec, ProblemData) {
        let grid = GridSpec::unit_square(n);
        let spec = MixtureSpec::two_species();
        let data = ProblemData::new(
            VectorField::zeros(&grid),
            BoundaryField::constant(&grid, 1.0),
        );
        (grid, spec, data)
    }

    fn quick_params() -> ContinuationParams {
        ContinuationParams {
            m: 100.0,
            lambda_schedule: vec![0.0, 0.5, 1.0],
            delta_schedule: vec![0.1, 0.01],
            damping: 1.0,
            ..ContinuationParams::default()
        }
    }

    #[test]
    fn params_validation_catches_bad_schedules() {
        let mut p = ContinuationParams::default();
        p.lambda_schedule = vec![0.1, 1.0];
        assert!(p.validate().is_err());
        let mut p = ContinuationParams::default();
        p.delta_schedule = vec![0.01, 0.1];
        assert!(p.validate().is_err());
        let mut p = ContinuationParams::default();
        p.damping = 0.0;
        assert!(p.validate().is_err());
        assert!(ContinuationParams::default().validate().is_ok());
    }

    #[test]
    fn f0_is_independent_of_the_barred_state() {
        let (grid, spec, data) = trivial_setup(10);
        let params = quick_params();
        let config = SubsolverConfig::default();
        let pi = std::f64::consts::PI;
        let barred_a = FieldState::uniform_start(&grid, params.m, 2, 1.0);
        let barred_b = FieldState {
            r: ScalarField::from_fn(&grid, |x, y| 3.0 * (pi * x).cos() * (pi * y).cos()),
            u: VectorField::from_fn(&grid, |x, y| ((pi * x).sin() * 0.3, (pi * y).sin() * 0.2)),
            z: ScalarField::from_fn(&grid, |x, _| 0.4 * (pi * x).cos()),
            w: vec![
                ScalarField::from_fn(&grid, |_, y| -0.9 + 0.2 * y),
                ScalarField::from_fn(&grid, |x, _| -0.5 - 0.2 * x),
            ],
            m: params.m,
        };
        let mut ws = FlowWorkspace::new();
        let out_a = apply_f_lambda(
            &grid, &spec, &barred_a, 0.0, 0.1, &params, &data, &config, &mut ws,
        )
        .unwrap();
        let mut ws = FlowWorkspace::new();
        let out_b = apply_f_lambda(
            &grid, &spec, &barred_b, 0.0, 0.1, &params, &data, &config, &mut ws,
        )
        .unwrap();
        let diff = composite_norm(&grid, &out_a.state, &out_b.state, &spec, params.p);
        assert!(diff <= 1e-10, "F0 output difference {diff}");
    }

    #[test]
    fn lambda_zero_fixed_point_in_two_iterations() {
        let (grid, spec, data) = trivial_setup(10);
        let params = quick_params();
        let config = SubsolverConfig::default();
        let start = FieldState {
            r: ScalarField::zeros(&grid),
            u: VectorField::from_fn(&grid, |x, y| {
                (
                    0.05 * (std::f64::consts::PI * x).sin(),
                    0.05 * y * (1.0 - y),
                )
            }),
            z: ScalarField::constant(&grid, 0.3),
            w: vec![ScalarField::constant(&grid, -1.0); 2],
            m: params.m,
        };
        let mut ws = FlowWorkspace::new();
        let (state, report) = solve_at(
            &grid, &spec, 0.0, 0.1, &start, &params, &data, &config, &mut ws,
        )
        .unwrap();
        assert!(report.fp_iterations <= 2, "took {}", report.fp_iterations);
        assert!(state.all_finite());
    }

    #[test]
    fn trivial_data_converges_to_uniform_roots() {
        // Zero force, unit outer temperature: the coupled solution is the
        // uniform state whose species root solves the scalar regularized
        // equation: theta = 1, u = 0, r = 0.
        let (grid, spec, data) = trivial_setup(10);
        let params = quick_params();
        let config = SubsolverConfig::default();
        let (state, report) = run_construction(&grid, &spec, &params, &data, &config)
            .map_err(|e| e.error.to_string())
            .unwrap();

        // Scalar bisection oracle at the final delta.
        let delta = *params.delta_schedule.last().unwrap();
        let eps = ContinuationParams::epsilon(delta);
        let f = |w: f64| eps * w + delta * w.exp() - delta / 2.0;
        let (mut lo, mut hi) = (-30.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let wstar = 0.5 * (lo + hi);

        assert!(state.u.x.max_abs() < 1e-7, "{}", state.u.x.max_abs());
        assert!(state.r.max_abs() < 1e-7, "{}", state.r.max_abs());
        for v in state.z.values() {
            assert!(
                v.abs() < 1e-7,
                "theta should sit at the outer temperature: {v}"
            );
        }
        for wk in &state.w {
            for v in wk.values() {
                assert!((v - wstar).abs() < 1e-7, "{v} vs {wstar}");
            }
        }
        // The mass defect trace shrinks along the schedule.
        let trace = &report.delta_trace;
        assert!(trace.len() == 2 && trace[1].1 < trace[0].1, "{trace:?}");
        // The cap is inactive on every stage.
        assert!(report.stages.iter().all(|s| s.g_val == 1.0));
        // Memberships hold at the defaults.
        let last = report.stages.last().unwrap();
        assert!(
            last.membership.in_m_u
                && last.membership.in_m_r
                && last.membership.in_m_theta
                && last.membership.in_m_y
        );
    }

    #[test]
    fn membership_fails_for_scaled_states() {
        let (grid, spec, _) = trivial_setup(10);
        let params = quick_params();
        let mut state = FieldState::uniform_start(&grid, params.m, 2, 1.0);
        assert!(check_membership(&grid, &state, &spec, &params).in_m_theta);
        let pi = std::f64::consts::PI;
        state.u = VectorField::from_fn(&grid, |x, y| (1e6 * (pi * x).sin() * y, 1e6 * x * y));
        state.z = ScalarField::from_fn(&grid, |x, _| 6.0 + x);
        let verdict = check_membership(&grid, &state, &spec, &params);
        assert!(!verdict.in_m_u && !verdict.in_m_theta);
    }

    #[test]
    fn density_below_minimum_is_refused() {
        let (grid, spec, data) = trivial_setup(10);
        let params = ContinuationParams {
            m: 1.0,
            ..quick_params()
        };
        let config = SubsolverConfig::default();
        let err = run_construction(&grid, &spec, &params, &data, &config)
            .err()
            .expect("refusal");
        assert!(matches!(err.error, HomotopyError::DensityTooLow { .. }));
        assert!(err.partial.stages.is_empty());
    }
}
