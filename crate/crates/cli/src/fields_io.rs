//! Field serialization: one CSV per field, one row per node with
//! `i,j,x,y,<values...>`, full round-trip precision, and a provenance
//! header block carrying the config hash and tool version.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mixsteady_core::grid::{GridSpec, ScalarField, VectorField};
use mixsteady_core::subsolvers::FieldState;
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: field violates positivity at node ({i}, {j}): {value}")]
    Positivity {
        path: String,
        i: usize,
        j: usize,
        value: f64,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FieldIoError + '_ {
    move |source| FieldIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Provenance lines prepended to every output file.
pub fn provenance_header(config_hash: &str) -> String {
    format!("# tool_version: {TOOL_VERSION}\n# config_hash: {config_hash}\n")
}

fn write_csv(
    path: &Path,
    config_hash: &str,
    grid: &GridSpec,
    names: &[&str],
    columns: &[&ScalarField],
) -> Result<(), FieldIoError> {
    let mut out = provenance_header(config_hash);
    let _ = write!(out, "i,j,x,y");
    for name in names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            let (x, y) = grid.node_xy(i, j);
            let _ = write!(out, "{i},{j},{x},{y}");
            for c in columns {
                let _ = write!(out, ",{}", c.at(i, j));
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_scalar_csv(
    path: &Path,
    config_hash: &str,
    grid: &GridSpec,
    name: &str,
    field: &ScalarField,
) -> Result<(), FieldIoError> {
    write_csv(path, config_hash, grid, &[name], &[field])
}

pub fn write_vector_csv(
    path: &Path,
    config_hash: &str,
    grid: &GridSpec,
    names: &[&str; 2],
    field: &VectorField,
) -> Result<(), FieldIoError> {
    write_csv(path, config_hash, grid, names, &[&field.x, &field.y])
}

struct CsvBody {
    names: Vec<String>,
    /// One vector per value column, in node order.
    columns: Vec<Vec<f64>>,
}

fn read_csv(path: &Path, grid: &GridSpec) -> Result<CsvBody, FieldIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let p = path.display().to_string();
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut expected_node = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        match &names {
            None => {
                if parts.len() < 5
                    || parts[0] != "i"
                    || parts[1] != "j"
                    || parts[2] != "x"
                    || parts[3] != "y"
                {
                    return Err(FieldIoError::Schema {
                        path: p,
                        line: lineno + 1,
                        message: format!("expected header i,j,x,y,<name...>, got `{line}`"),
                    });
                }
                names = Some(parts[4..].iter().map(|s| s.to_string()).collect());
                columns = vec![Vec::with_capacity(grid.n_nodes()); parts.len() - 4];
            }
            Some(names) => {
                if parts.len() != names.len() + 4 {
                    return Err(FieldIoError::Schema {
                        path: p,
                        line: lineno + 1,
                        message: "wrong number of columns".into(),
                    });
                }
                let i: usize = parts[0].parse().map_err(|_| FieldIoError::Schema {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad node index `{}`", parts[0]),
                })?;
                let j: usize = parts[1].parse().map_err(|_| FieldIoError::Schema {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad node index `{}`", parts[1]),
                })?;
                if grid.idx(i, j) != expected_node || i > grid.nx || j > grid.ny {
                    return Err(FieldIoError::Schema {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: format!(
                            "node ({i}, {j}) out of order for the {}x{} grid",
                            grid.nx, grid.ny
                        ),
                    });
                }
                expected_node += 1;
                for (k, part) in parts[4..].iter().enumerate() {
                    let v: f64 = part.parse().map_err(|_| FieldIoError::Schema {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: format!("bad number `{part}`"),
                    })?;
                    columns[k].push(v);
                }
            }
        }
    }
    if expected_node != grid.n_nodes() {
        return Err(FieldIoError::Schema {
            path: path.display().to_string(),
            line: 0,
            message: format!(
                "{expected_node} rows for a grid with {} nodes",
                grid.n_nodes()
            ),
        });
    }
    Ok(CsvBody {
        names: names.unwrap_or_default(),
        columns,
    })
}

pub fn read_scalar_csv(
    path: &Path,
    grid: &GridSpec,
    name: &str,
) -> Result<ScalarField, FieldIoError> {
    let body = read_csv(path, grid)?;
    let k = body
        .names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| FieldIoError::Schema {
            path: path.display().to_string(),
            line: 0,
            message: format!("column `{name}` not present in {:?}", body.names),
        })?;
    let mut field = ScalarField::zeros(grid);
    field.values_mut().copy_from_slice(&body.columns[k]);
    Ok(field)
}

pub fn read_vector_csv(
    path: &Path,
    grid: &GridSpec,
    names: &[&str; 2],
) -> Result<VectorField, FieldIoError> {
    let body = read_csv(path, grid)?;
    let mut out = VectorField::zeros(grid);
    for (name, target) in names.iter().zip([&mut out.x, &mut out.y]) {
        let k = body
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| FieldIoError::Schema {
                path: path.display().to_string(),
                line: 0,
                message: format!("column `{name}` not present in {:?}", body.names),
            })?;
        target.values_mut().copy_from_slice(&body.columns[k]);
    }
    Ok(out)
}

/// File names of a serialized state, relative to its directory.
pub fn state_files(n_species: usize) -> Vec<String> {
    let mut names = vec![
        "r.csv".to_string(),
        "u.csv".to_string(),
        "theta.csv".to_string(),
    ];
    for k in 1..=n_species {
        names.push(format!("y_{k}.csv"));
    }
    names
}

/// Writes the physical fields of a state: r, u, theta, and the mass fractions.
pub fn write_state(
    dir: &Path,
    config_hash: &str,
    grid: &GridSpec,
    state: &FieldState,
) -> Result<(), FieldIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_scalar_csv(&dir.join("r.csv"), config_hash, grid, "r", &state.r)?;
    write_vector_csv(
        &dir.join("u.csv"),
        config_hash,
        grid,
        &["ux", "uy"],
        &state.u,
    )?;
    write_scalar_csv(
        &dir.join("theta.csv"),
        config_hash,
        grid,
        "theta",
        &state.theta(),
    )?;
    for (k, y) in state.mass_fractions().iter().enumerate() {
        write_scalar_csv(
            &dir.join(format!("y_{}.csv", k + 1)),
            config_hash,
            grid,
            &format!("y_{}", k + 1),
            y,
        )?;
    }
    Ok(())
}

/// Reads a state back from the physical fields; temperature and mass
/// fractions must be strictly positive.
pub fn read_state(
    dir: &Path,
    grid: &GridSpec,
    n_species: usize,
    m: f64,
) -> Result<FieldState, FieldIoError> {
    let r = read_scalar_csv(&dir.join("r.csv"), grid, "r")?;
    let u = read_vector_csv(&dir.join("u.csv"), grid, &["ux", "uy"])?;
    let theta = read_scalar_csv(&dir.join("theta.csv"), grid, "theta")?;
    check_positive(&dir.join("theta.csv"), grid, &theta)?;
    let mut w = Vec::with_capacity(n_species);
    for k in 1..=n_species {
        let path = dir.join(format!("y_{k}.csv"));
        let y = read_scalar_csv(&path, grid, &format!("y_{k}"))?;
        check_positive(&path, grid, &y)?;
        w.push(y.map(f64::ln));
    }
    Ok(FieldState {
        r,
        u,
        z: theta.map(f64::ln),
        w,
        m,
    })
}

fn check_positive(path: &Path, grid: &GridSpec, field: &ScalarField) -> Result<(), FieldIoError> {
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            let v = field.at(i, j);
            if !(v > 0.0) {
                return Err(FieldIoError::Positivity {
                    path: path.display().to_string(),
                    i,
                    j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Writes a ledger CSV: provenance header, a column header, then rows.
pub fn write_ledger(
    path: &Path,
    config_hash: &str,
    header: &str,
    rows: &[String],
    footer: &[String],
) -> Result<(), FieldIoError> {
    let mut out = provenance_header(config_hash);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    for line in footer {
        let _ = writeln!(out, "# {line}");
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
