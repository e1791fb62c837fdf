//! Analytic presets for the force field and the outer temperature:
//! constant, a single trigonometric mode, a Gaussian bump, or per-node CSV.
//! The presets cover every shipped verification run without external data.

use std::path::PathBuf;

use mixsteady_core::grid::{BoundaryField, GridSpec, VectorField};

use crate::config::Reader;

/// One trigonometric factor `sin(pi k s / L)` or `cos(pi k s / L)`.
#[derive(Clone, Debug)]
pub struct Trig {
    pub mode: f64,
    pub cos: bool,
}

impl Trig {
    fn eval(&self, s: f64, len: f64) -> f64 {
        let arg = std::f64::consts::PI * self.mode * s / len;
        if self.cos {
            arg.cos()
        } else {
            arg.sin()
        }
    }
}

/// Specific force presets.
#[derive(Clone, Debug)]
pub enum ForcePreset {
    Zero,
    Constant {
        fx: f64,
        fy: f64,
    },
    /// `f_c = amp_c tx(x) ty(y)` with shared modes per component.
    Fourier {
        amp_x: f64,
        amp_y: f64,
        tx: Trig,
        ty: Trig,
    },
    /// `f = (amp_x, amp_y) exp(-((x-cx)^2 + (y-cy)^2) / (2 sigma^2))`.
    Gaussian {
        amp_x: f64,
        amp_y: f64,
        cx: f64,
        cy: f64,
        sigma: f64,
    },
    /// Per-node CSV with columns i,j,x,y,fx,fy.
    Csv(PathBuf),
}

impl ForcePreset {
    pub(crate) fn from_reader(r: &mut Reader) -> ForcePreset {
        let kind = r.string("data", "force", "zero");
        match kind.as_str() {
            "zero" => ForcePreset::Zero,
            "constant" => ForcePreset::Constant {
                fx: r.f64("data", "force_x", 0.0),
                fy: r.f64("data", "force_y", 0.0),
            },
            "fourier" => ForcePreset::Fourier {
                amp_x: r.f64("data", "force_amp_x", 0.0),
                amp_y: r.f64("data", "force_amp_y", 0.0),
                tx: Trig {
                    mode: r.f64("data", "force_mode_x", 1.0),
                    cos: r.bool("data", "force_cos_x", false),
                },
                ty: Trig {
                    mode: r.f64("data", "force_mode_y", 1.0),
                    cos: r.bool("data", "force_cos_y", false),
                },
            },
            "gaussian" => ForcePreset::Gaussian {
                amp_x: r.f64("data", "force_amp_x", 0.0),
                amp_y: r.f64("data", "force_amp_y", 0.0),
                cx: r.f64("data", "force_center_x", 0.5),
                cy: r.f64("data", "force_center_y", 0.5),
                sigma: {
                    let s = r.f64("data", "force_sigma", 0.1);
                    if !(s > 0.0) {
                        r.violation("data", "force_sigma", "must be positive".into());
                    }
                    s
                },
            },
            other => match other.strip_prefix("csv:") {
                Some(path) => ForcePreset::Csv(PathBuf::from(path)),
                None => {
                    r.violation("data", "force", format!("unknown preset `{other}`"));
                    ForcePreset::Zero
                }
            },
        }
    }

    pub fn build(&self, grid: &GridSpec) -> Result<VectorField, String> {
        match self {
            ForcePreset::Zero => Ok(VectorField::zeros(grid)),
            ForcePreset::Constant { fx, fy } => Ok(VectorField::from_fn(grid, |_, _| (*fx, *fy))),
            ForcePreset::Fourier {
                amp_x,
                amp_y,
                tx,
                ty,
            } => Ok(VectorField::from_fn(grid, |x, y| {
                let shape = tx.eval(x, grid.lx) * ty.eval(y, grid.ly);
                (amp_x * shape, amp_y * shape)
            })),
            ForcePreset::Gaussian {
                amp_x,
                amp_y,
                cx,
                cy,
                sigma,
            } => Ok(VectorField::from_fn(grid, |x, y| {
                let bump = (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp();
                (amp_x * bump, amp_y * bump)
            })),
            ForcePreset::Csv(path) => crate::fields_io::read_vector_csv(path, grid, &["fx", "fy"])
                .map_err(|e| e.to_string()),
        }
    }
}

/// Outer-temperature presets; evaluated on the boundary nodes.
#[derive(Clone, Debug)]
pub enum ThetaPreset {
    Constant {
        value: f64,
    },
    Fourier {
        value: f64,
        amp: f64,
        tx: Trig,
        ty: Trig,
    },
    Gaussian {
        value: f64,
        amp: f64,
        cx: f64,
        cy: f64,
        sigma: f64,
    },
    Csv(PathBuf),
}

impl ThetaPreset {
    pub(crate) fn from_reader(r: &mut Reader) -> ThetaPreset {
        let kind = r.string("data", "theta", "constant");
        let preset = match kind.as_str() {
            "constant" => ThetaPreset::Constant {
                value: r.f64("data", "theta_value", 1.0),
            },
            "fourier" => ThetaPreset::Fourier {
                value: r.f64("data", "theta_value", 1.0),
                amp: r.f64("data", "theta_amp", 0.0),
                tx: Trig {
                    mode: r.f64("data", "theta_mode_x", 1.0),
                    cos: r.bool("data", "theta_cos_x", true),
                },
                ty: Trig {
                    mode: r.f64("data", "theta_mode_y", 1.0),
                    cos: r.bool("data", "theta_cos_y", true),
                },
            },
            "gaussian" => ThetaPreset::Gaussian {
                value: r.f64("data", "theta_value", 1.0),
                amp: r.f64("data", "theta_amp", 0.0),
                cx: r.f64("data", "theta_center_x", 0.5),
                cy: r.f64("data", "theta_center_y", 0.5),
                sigma: {
                    let s = r.f64("data", "theta_sigma", 0.1);
                    if !(s > 0.0) {
                        r.violation("data", "theta_sigma", "must be positive".into());
                    }
                    s
                },
            },
            other => match other.strip_prefix("csv:") {
                Some(path) => ThetaPreset::Csv(PathBuf::from(path)),
                None => {
                    r.violation("data", "theta", format!("unknown preset `{other}`"));
                    ThetaPreset::Constant { value: 1.0 }
                }
            },
        };
        // Positivity of the analytic presets is checkable at load time.
        match &preset {
            ThetaPreset::Constant { value } if !(*value > 0.0) => {
                r.violation(
                    "data",
                    "theta_value",
                    "outer temperature must be positive".into(),
                );
            }
            ThetaPreset::Fourier { value, amp, .. } | ThetaPreset::Gaussian { value, amp, .. } => {
                if !(*value - amp.abs() > 0.0) {
                    r.violation(
                        "data",
                        "theta_value",
                        "outer temperature can reach zero: need value > |amp|".into(),
                    );
                }
            }
            _ => {}
        }
        preset
    }

    pub fn build(&self, grid: &GridSpec) -> Result<BoundaryField, String> {
        match self {
            ThetaPreset::Constant { value } => Ok(BoundaryField::constant(grid, *value)),
            ThetaPreset::Fourier { value, amp, tx, ty } => {
                Ok(BoundaryField::from_fn(grid, |x, y| {
                    value + amp * tx.eval(x, grid.lx) * ty.eval(y, grid.ly)
                }))
            }
            ThetaPreset::Gaussian {
                value,
                amp,
                cx,
                cy,
                sigma,
            } => Ok(BoundaryField::from_fn(grid, |x, y| {
                value + amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
            })),
            ThetaPreset::Csv(path) => {
                let field = crate::fields_io::read_scalar_csv(path, grid, "theta")
                    .map_err(|e| e.to_string())?;
                let values = grid
                    .boundary_nodes()
                    .map(|(i, j)| field.at(i, j))
                    .collect::<Vec<_>>();
                if values.iter().any(|v| !(*v > 0.0)) {
                    return Err(
                        "outer temperature from CSV must be positive on the boundary".into(),
                    );
                }
                Ok(BoundaryField::from_values(values))
            }
        }
    }
}
