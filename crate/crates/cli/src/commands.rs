//! The four commands: solve, sweep, mms, check. Each returns a typed error
//! that the binary maps to a stable exit code.

use std::fmt::Write as _;
use std::path::Path;

use mixsteady_core::diagnostics::{diagnose, DiagnosticsInputs, DiagnosticsReport};
use mixsteady_core::grid::ConvectionScheme;
use mixsteady_core::homotopy::run_construction;
use mixsteady_core::homotopy::{solve_at, ConstructionReport, HomotopyError, ProblemData};
use mixsteady_core::subsolvers::{FieldState, FlowWorkspace};
use thiserror::Error;

use crate::config::{config_hash, ConfigError, ProblemConfig};
use crate::fields_io::{write_ledger, write_state, FieldIoError};
use crate::mms::{default_sizes, run_case, MmsError, MmsTable};
use crate::reports::write_json;

/// Exit codes are a documented contract: 0 success, 2 configuration or
/// validation refusal, 3 solver nonconvergence, 4 file-system trouble,
/// 5 state-file schema or domain violation.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_SCHEMA: i32 = 5;

#[derive(Debug, Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Solver(#[from] HomotopyError),
    #[error(transparent)]
    FieldIo(#[from] FieldIoError),
    #[error(transparent)]
    Mms(#[from] MmsError),
    #[error("sweep axis must be `delta` or `m`, got `{0}`")]
    BadAxis(String),
    #[error("sweep values invalid: {0}")]
    BadValues(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_)
            | CmdError::Data(_)
            | CmdError::BadAxis(_)
            | CmdError::BadValues(_) => EXIT_CONFIG,
            CmdError::Solver(e) => match e {
                HomotopyError::BadParams(_) | HomotopyError::DensityTooLow { .. } => EXIT_CONFIG,
                _ => EXIT_NONCONVERGENCE,
            },
            CmdError::FieldIo(e) => match e {
                FieldIoError::Io { .. } => EXIT_IO,
                _ => EXIT_SCHEMA,
            },
            CmdError::Mms(MmsError::UnknownCase(_)) => EXIT_CONFIG,
            CmdError::Mms(_) => EXIT_NONCONVERGENCE,
        }
    }
}

fn problem_data(cfg: &ProblemConfig) -> Result<ProblemData, CmdError> {
    let force = cfg.force.build(&cfg.grid).map_err(CmdError::Data)?;
    let theta_bc = cfg.theta.build(&cfg.grid).map_err(CmdError::Data)?;
    Ok(ProblemData::new(force, theta_bc))
}

fn final_diag_inputs<'a>(cfg: &'a ProblemConfig, data: &'a ProblemData) -> DiagnosticsInputs<'a> {
    DiagnosticsInputs {
        theta_bc: &data.theta_bc,
        force: &data.force,
        lambda: 1.0,
        delta: *cfg
            .continuation
            .delta_schedule
            .last()
            .expect("validated schedule"),
        p: cfg.continuation.p,
        e_radius: cfg.continuation.e_radius,
        cf_radius: cfg.continuation.cf_radius,
    }
}

/// Runs the full construction and writes fields plus reports.
pub fn cmd_solve(cfg: &ProblemConfig, out_dir: &Path) -> Result<ConstructionReport, CmdError> {
    // Parameter refusals happen before any solve.
    cfg.continuation.validate()?;
    if cfg.continuation.m < cfg.continuation.m_min {
        return Err(CmdError::Solver(HomotopyError::DensityTooLow {
            m: cfg.continuation.m,
            m_min: cfg.continuation.m_min,
        }));
    }
    let data = problem_data(cfg)?;
    let (state, report) = run_construction(
        &cfg.grid,
        &cfg.mixture,
        &cfg.continuation,
        &data,
        &cfg.solver,
    )
    .map_err(|failure| CmdError::Solver(failure.error))?;

    let hash = config_hash(&cfg.canonical_text);
    std::fs::create_dir_all(out_dir).map_err(|source| FieldIoError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_state(out_dir, &hash, &cfg.grid, &state)?;
    if let Some(diag) = &report.final_diagnostics {
        write_json(&out_dir.join("diagnostics.json"), &hash, diag)?;
    }
    write_json(&out_dir.join("report.json"), &hash, &report)?;
    Ok(report)
}

/// Recomputes the diagnostics of a saved state from files alone.
pub fn cmd_check(
    cfg: &ProblemConfig,
    state_dir: &Path,
    out_dir: &Path,
) -> Result<DiagnosticsReport, CmdError> {
    let data = problem_data(cfg)?;
    let state =
        crate::fields_io::read_state(state_dir, &cfg.grid, cfg.mixture.n, cfg.continuation.m)?;
    let diag = diagnose(
        &cfg.grid,
        &state,
        &cfg.mixture,
        &final_diag_inputs(cfg, &data),
    );
    let hash = config_hash(&cfg.canonical_text);
    std::fs::create_dir_all(out_dir).map_err(|source| FieldIoError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_json(&out_dir.join("diagnostics.json"), &hash, &diag)?;
    Ok(diag)
}

/// Sweep axis selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Delta,
    M,
}

impl std::str::FromStr for SweepAxis {
    type Err = CmdError;
    fn from_str(s: &str) -> Result<Self, CmdError> {
        match s {
            "delta" => Ok(SweepAxis::Delta),
            "m" | "M" => Ok(SweepAxis::M),
            other => Err(CmdError::BadAxis(other.to_string())),
        }
    }
}

/// One ledger row of a sweep.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub ok: bool,
    pub mass_defect_l2: f64,
    pub mass_defect_w12: f64,
    pub xi: f64,
    pub xi_over_m: f64,
    pub entropy_balance_residual: f64,
    pub total_energy_residual: f64,
    pub sigma_min: f64,
    pub sigma_total: f64,
    pub sigma_regularization: f64,
    pub g_val: f64,
    pub apriori1: f64,
    pub apriori2_xi: f64,
    pub compat_max: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepSummary {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of the mass defect against delta (delta axis).
    pub mass_defect_slope: Option<f64>,
    /// Strict monotone decrease of Xi/M across the sweep (M axis).
    pub xi_over_m_decreasing: Option<bool>,
    /// Relative spread (max-min)/mean of the energy-norm ledger line.
    pub apriori1_spread: Option<f64>,
}

fn row_from_state(
    cfg: &ProblemConfig,
    data: &ProblemData,
    state: &FieldState,
    value: f64,
    delta: f64,
    g_val: f64,
) -> SweepRow {
    let inputs = DiagnosticsInputs {
        theta_bc: &data.theta_bc,
        force: &data.force,
        lambda: 1.0,
        delta,
        p: cfg.continuation.p,
        e_radius: cfg.continuation.e_radius,
        cf_radius: cfg.continuation.cf_radius,
    };
    let diag = diagnose(&cfg.grid, state, &cfg.mixture, &inputs);
    let ledger = |id: &str| {
        diag.bound_ledger
            .iter()
            .find(|e| e.id == id)
            .map(|e| e.lhs)
            .unwrap_or(f64::NAN)
    };
    SweepRow {
        value,
        ok: true,
        mass_defect_l2: diag.mass_defect_l2,
        mass_defect_w12: diag.mass_defect_w12,
        xi: diag.xi,
        xi_over_m: diag.xi_over_m,
        entropy_balance_residual: diag.entropy_balance_residual,
        total_energy_residual: diag.total_energy_residual,
        sigma_min: diag.sigma_min,
        sigma_total: diag.sigma_total,
        sigma_regularization: diag.sigma_regularization,
        g_val,
        apriori1: ledger("apriori1"),
        apriori2_xi: ledger("apriori2_xi"),
        compat_max: diag.compat.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

fn failed_row(value: f64) -> SweepRow {
    SweepRow {
        value,
        ok: false,
        mass_defect_l2: f64::NAN,
        mass_defect_w12: f64::NAN,
        xi: f64::NAN,
        xi_over_m: f64::NAN,
        entropy_balance_residual: f64::NAN,
        total_energy_residual: f64::NAN,
        sigma_min: f64::NAN,
        sigma_total: f64::NAN,
        sigma_regularization: f64::NAN,
        g_val: f64::NAN,
        apriori1: f64::NAN,
        apriori2_xi: f64::NAN,
        compat_max: f64::NAN,
    }
}

/// Runs one construction for each axis value. With `jobs = 1` the runs are
/// chained (each warm-starts from the previous converged state); with more
/// jobs they run independently from cold starts and merge in input order.
pub fn cmd_sweep(
    cfg: &ProblemConfig,
    axis: SweepAxis,
    values: &[f64],
    out_dir: &Path,
    jobs: usize,
) -> Result<SweepSummary, CmdError> {
    if values.is_empty() {
        return Err(CmdError::BadValues("empty value list".into()));
    }
    match axis {
        SweepAxis::Delta => {
            if values.windows(2).any(|w| w[1] >= w[0]) || values.iter().any(|&v| !(v > 0.0)) {
                return Err(CmdError::BadValues(
                    "delta values must be positive and strictly decreasing".into(),
                ));
            }
        }
        SweepAxis::M => {
            if values.iter().any(|&v| !(v > 0.0)) {
                return Err(CmdError::BadValues(
                    "mean densities must be positive".into(),
                ));
            }
        }
    }
    let data = problem_data(cfg)?;

    let run_value =
        |value: f64, warm: Option<&FieldState>| -> Result<(FieldState, SweepRow), HomotopyError> {
            let mut params = cfg.continuation.clone();
            match axis {
                SweepAxis::Delta => params.delta_schedule = vec![value],
                SweepAxis::M => params.m = value,
            }
            params.validate()?;
            let theta_mean = data.theta_mean(&cfg.grid);
            let mut state = match warm {
                Some(s) => FieldState {
                    m: params.m,
                    ..s.clone()
                },
                None => FieldState::uniform_start(&cfg.grid, params.m, cfg.mixture.n, theta_mean),
            };
            let mut flow_ws = FlowWorkspace::new();
            let mut g_val = 1.0;
            let delta = *params.delta_schedule.last().expect("nonempty");
            for &dl in &params.delta_schedule.clone() {
                for &lambda in &params.lambda_schedule.clone() {
                    let (next, stage) = solve_at(
                        &cfg.grid,
                        &cfg.mixture,
                        lambda,
                        dl,
                        &state,
                        &params,
                        &data,
                        &cfg.solver,
                        &mut flow_ws,
                    )?;
                    state = next;
                    g_val = stage.g_val;
                }
            }
            let row = row_from_state(cfg, &data, &state, value, delta, g_val);
            Ok((state, row))
        };

    let mut rows: Vec<SweepRow> = Vec::with_capacity(values.len());
    if jobs <= 1 {
        let mut warm: Option<FieldState> = None;
        for &value in values {
            match run_value(value, warm.as_ref()) {
                Ok((state, row)) => {
                    rows.push(row);
                    warm = Some(state);
                }
                Err(_) => {
                    // Partial failure: mark the row and continue cold.
                    rows.push(failed_row(value));
                    warm = None;
                }
            }
        }
    } else {
        let results: Vec<SweepRow> = std::thread::scope(|scope| {
            let handles: Vec<_> = values
                .iter()
                .map(|&value| {
                    scope.spawn(move || {
                        run_value(value, None)
                            .map(|(_, row)| row)
                            .unwrap_or_else(|_| failed_row(value))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker"))
                .collect()
        });
        rows.extend(results);
    }

    // Slope and regime summaries.
    let good: Vec<&SweepRow> = rows.iter().filter(|r| r.ok).collect();
    let mass_defect_slope = match axis {
        SweepAxis::Delta if good.len() >= 2 => {
            let pts: Vec<(f64, f64)> = good
                .iter()
                .map(|r| (r.value.ln(), r.mass_defect_l2.max(1e-300).ln()))
                .collect();
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|(x, _)| x).sum();
            let sy: f64 = pts.iter().map(|(_, y)| y).sum();
            let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
            let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
            Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
        }
        _ => None,
    };
    let xi_over_m_decreasing = match axis {
        SweepAxis::M if good.len() >= 2 => {
            Some(good.windows(2).all(|w| w[1].xi_over_m < w[0].xi_over_m))
        }
        _ => None,
    };
    let apriori1_spread = match axis {
        SweepAxis::M if !good.is_empty() => {
            let vals: Vec<f64> = good.iter().map(|r| r.apriori1).collect();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            Some((max - min) / mean)
        }
        _ => None,
    };

    let summary = SweepSummary {
        axis: format!("{axis:?}").to_lowercase(),
        rows,
        mass_defect_slope,
        xi_over_m_decreasing,
        apriori1_spread,
    };

    // Ledger CSV.
    let hash = config_hash(&cfg.canonical_text);
    std::fs::create_dir_all(out_dir).map_err(|source| FieldIoError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let header = "value,ok,mass_defect_l2,mass_defect_w12,xi,xi_over_m,entropy_balance_residual,total_energy_residual,sigma_min,sigma_total,sigma_regularization,g_val,apriori1,apriori2_xi,compat_max";
    let body: Vec<String> = summary
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.value,
                r.ok,
                r.mass_defect_l2,
                r.mass_defect_w12,
                r.xi,
                r.xi_over_m,
                r.entropy_balance_residual,
                r.total_energy_residual,
                r.sigma_min,
                r.sigma_total,
                r.sigma_regularization,
                r.g_val,
                r.apriori1,
                r.apriori2_xi,
                r.compat_max
            )
        })
        .collect();
    let mut footer = Vec::new();
    if let Some(s) = summary.mass_defect_slope {
        footer.push(format!("mass_defect_slope: {s}"));
    }
    if let Some(b) = summary.xi_over_m_decreasing {
        footer.push(format!("xi_over_m_strictly_decreasing: {b}"));
    }
    if let Some(s) = summary.apriori1_spread {
        footer.push(format!("apriori1_relative_spread: {s}"));
    }
    write_ledger(&out_dir.join("sweep.csv"), &hash, header, &body, &footer)?;
    write_json(&out_dir.join("sweep.json"), &hash, &summary)?;
    Ok(summary)
}

/// Runs a manufactured-solution case and writes the convergence table.
pub fn cmd_mms(
    case: &str,
    sizes: Option<&[usize]>,
    scheme: ConvectionScheme,
    out_dir: &Path,
) -> Result<MmsTable, CmdError> {
    let sizes = sizes.unwrap_or_else(|| default_sizes(case));
    let table = run_case(case, sizes, scheme)?;
    std::fs::create_dir_all(out_dir).map_err(|source| FieldIoError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut text = String::new();
    let _ = writeln!(text, "case,scheme,n,h,err_l2,err_max,path_diff");
    for row in &table.rows {
        let pd = row.path_diff.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{pd}",
            table.case, table.scheme, row.n, row.h, row.err_l2, row.err_max
        );
    }
    let _ = writeln!(text, "# observed_order_l2: {}", table.observed_order_l2);
    let _ = writeln!(text, "# observed_order_max: {}", table.observed_order_max);
    let path = out_dir.join(format!("mms_{}_{}.csv", table.case, table.scheme));
    std::fs::write(&path, text).map_err(|source| FieldIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(table)
}
