//! Problem configuration: a flat, sectioned key = value text format chosen
//! for diff-friendliness and unambiguous parsing. Unknown keys are rejected
//! and validation reports every violation, not just the first.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mixsteady_core::grid::{ConvectionScheme, GridSpec};
use mixsteady_core::homotopy::ContinuationParams;
use mixsteady_core::mixture::MixtureSpec;
use mixsteady_core::subsolvers::SubsolverConfig;
use thiserror::Error;

use crate::presets::{ForcePreset, ThetaPreset};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("configuration invalid:\n{}", violations.join("\n"))]
    Validation { violations: Vec<String> },
}

/// Fully parsed and validated problem definition.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub grid: GridSpec,
    pub mixture: MixtureSpec,
    pub continuation: ContinuationParams,
    pub solver: SubsolverConfig,
    pub force: ForcePreset,
    pub theta: ThetaPreset,
    /// Canonical text the config hash is computed from.
    pub canonical_text: String,
}

struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                    line: lineno + 1,
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: format!("expected key = value, got `{line}`"),
                });
            };
            if section.is_empty() {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: "key before any [section]".into(),
                });
            }
            let key = key.trim().to_string();
            let prev = entries.insert(
                (section.clone(), key.clone()),
                (value.trim().to_string(), lineno + 1),
            );
            if prev.is_some() {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: format!("duplicate key `{key}` in [{section}]"),
                });
            }
        }
        Ok(RawConfig { entries })
    }
}

/// Tracks consumed keys so leftovers can be rejected, and collects every
/// violation instead of stopping at the first.
pub(crate) struct Reader {
    raw: RawConfig,
    used: Vec<(String, String)>,
    violations: Vec<String>,
}

impl Reader {
    pub(crate) fn get(&mut self, section: &str, key: &str) -> Option<String> {
        let k = (section.to_string(), key.to_string());
        self.used.push(k.clone());
        self.raw.entries.get(&k).map(|(v, _)| v.clone())
    }

    pub(crate) fn violation(&mut self, section: &str, key: &str, message: String) {
        self.violations
            .push(format!("[{section}] {key}: {message}"));
    }

    pub(crate) fn f64(&mut self, section: &str, key: &str, default: f64) -> f64 {
        match self.get(section, key) {
            None => default,
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    self.violation(section, key, format!("`{v}` is not a finite number"));
                    default
                }
            },
        }
    }

    pub(crate) fn usize(&mut self, section: &str, key: &str, default: usize) -> usize {
        match self.get(section, key) {
            None => default,
            Some(v) => match v.parse::<usize>() {
                Ok(x) => x,
                _ => {
                    self.violation(section, key, format!("`{v}` is not a nonnegative integer"));
                    default
                }
            },
        }
    }

    pub(crate) fn bool(&mut self, section: &str, key: &str, default: bool) -> bool {
        match self.get(section, key) {
            None => default,
            Some(v) => match v.as_str() {
                "true" => true,
                "false" => false,
                _ => {
                    self.violation(section, key, format!("`{v}` must be true or false"));
                    default
                }
            },
        }
    }

    pub(crate) fn f64_list(&mut self, section: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.get(section, key) {
            None => default.to_vec(),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(x) if x.is_finite() => out.push(x),
                        _ => {
                            self.violation(
                                section,
                                key,
                                format!("`{}` is not a finite number", part.trim()),
                            );
                            return default.to_vec();
                        }
                    }
                }
                out
            }
        }
    }

    pub(crate) fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key)
            .unwrap_or_else(|| default.to_string())
    }
}

pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let raw = RawConfig::parse(text)?;
    let mut r = Reader {
        raw,
        used: Vec::new(),
        violations: Vec::new(),
    };

    // [grid]
    let lx = r.f64("grid", "lx", 1.0);
    let ly = r.f64("grid", "ly", 1.0);
    let nx = r.usize("grid", "nx", 64);
    let ny = r.usize("grid", "ny", 64);
    let grid = match GridSpec::new(lx, ly, nx, ny) {
        Ok(g) => g,
        Err(e) => {
            r.violations.push(format!("[grid]: {e}"));
            GridSpec::unit_square(8)
        }
    };

    // [mixture]
    let n = r.usize("mixture", "n", 2);
    let gamma = r.f64("mixture", "gamma", 2.0);
    if !(gamma > 1.0) {
        r.violation("mixture", "gamma", "> 1 required".into());
    }
    let c_v = r.f64_list("mixture", "c_v", &[1.5, 1.5]);
    let mixture = MixtureSpec {
        n,
        gamma,
        c_v,
        d0: r.f64("mixture", "d0", 1.0),
        kappa0: r.f64("mixture", "kappa0", 1.0),
        l0: r.f64("mixture", "l0", 1.0),
        lambda_rate: r.f64("mixture", "lambda_rate", 1.0),
        b_omega: r.f64("mixture", "b_omega", 100.0),
        f_fric: r.f64("mixture", "f_fric", 0.0),
    };
    if let Err(e) = mixture.validate() {
        r.violations.push(format!("[mixture]: {e}"));
    }

    // [continuation]
    let defaults = ContinuationParams::default();
    let lambda_steps = r.usize("continuation", "lambda_steps", 11);
    let lambda_schedule = if lambda_steps < 2 {
        r.violation("continuation", "lambda_steps", ">= 2 required".into());
        defaults.lambda_schedule.clone()
    } else {
        (0..lambda_steps)
            .map(|k| k as f64 / (lambda_steps - 1) as f64)
            .collect()
    };
    let continuation = ContinuationParams {
        m: r.f64("continuation", "m", defaults.m),
        m_min: r.f64("continuation", "m_min", defaults.m_min),
        lambda_schedule,
        delta_schedule: r.f64_list("continuation", "delta_schedule", &defaults.delta_schedule),
        c0: r.f64("continuation", "c0", defaults.c0),
        e_radius: r.f64("continuation", "e_radius", defaults.e_radius),
        cf_radius: r.f64("continuation", "cf_radius", defaults.cf_radius),
        damping: r.f64("continuation", "damping", defaults.damping),
        fp_tol: r.f64("continuation", "fp_tol", defaults.fp_tol),
        max_fp: r.usize("continuation", "max_fp", defaults.max_fp),
        p: r.f64("continuation", "p", defaults.p),
    };
    if let Err(e) = continuation.validate() {
        r.violations.push(format!("[continuation]: {e}"));
    }

    // [solver]
    let sdef = SubsolverConfig::default();
    let convection = match r.string("solver", "convection", "upwind").as_str() {
        "upwind" => ConvectionScheme::Upwind,
        "centered" => ConvectionScheme::Centered,
        other => {
            r.violation(
                "solver",
                "convection",
                format!("`{other}` must be upwind or centered"),
            );
            ConvectionScheme::Upwind
        }
    };
    let solver = SubsolverConfig {
        newton_tol: r.f64("solver", "newton_tol", sdef.newton_tol),
        max_newton: r.usize("solver", "max_newton", sdef.max_newton),
        picard_tol: r.f64("solver", "picard_tol", sdef.picard_tol),
        max_picard: r.usize("solver", "max_picard", sdef.max_picard),
        backtrack: r.f64("solver", "backtrack", sdef.backtrack),
        convection,
        stab: r.f64("solver", "stab", sdef.stab),
    };
    for (name, v) in [
        ("newton_tol", solver.newton_tol),
        ("picard_tol", solver.picard_tol),
        ("backtrack", solver.backtrack),
    ] {
        if !(v > 0.0) {
            r.violation("solver", name, "must be positive".into());
        }
    }
    if !(solver.stab >= 0.0) {
        r.violation("solver", "stab", "must be nonnegative".into());
    }

    // [data]
    let force = ForcePreset::from_reader(&mut r);
    let theta = ThetaPreset::from_reader(&mut r);

    // Reject unknown keys.
    let known: std::collections::BTreeSet<_> = r.used.iter().cloned().collect();
    for ((section, key), (_, line)) in &r.raw.entries {
        if !known.contains(&(section.clone(), key.clone())) {
            r.violations
                .push(format!("[{section}] {key} (line {line}): unknown key"));
        }
    }

    if !r.violations.is_empty() {
        return Err(ConfigError::Validation {
            violations: r.violations,
        });
    }

    let canonical_text = canonicalize(&r.raw);
    Ok(ProblemConfig {
        grid,
        mixture,
        continuation,
        solver,
        force,
        theta,
        canonical_text,
    })
}

/// Key-sorted `section.key = value` lines; the hashing input.
fn canonicalize(raw: &RawConfig) -> String {
    let mut out = String::new();
    for ((section, key), (value, _)) in &raw.entries {
        let _ = writeln!(out, "{section}.{key} = {value}");
    }
    out
}

/// FNV-1a over the canonical text; a provenance tag, not a cryptographic hash.
pub fn config_hash(canonical_text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical_text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"
[grid]
nx = 16
ny = 16

[mixture]
n = 2
gamma = 2.0
c_v = 1.5, 1.5

[continuation]
m = 100.0
delta_schedule = 0.1, 0.01

[data]
force = zero
theta = constant
theta_value = 1.0
"#;

    #[test]
    fn smoke_config_loads_cleanly() {
        let cfg = parse_config(SMOKE).unwrap();
        assert_eq!(cfg.grid.nx, 16);
        assert_eq!(cfg.continuation.delta_schedule, vec![0.1, 0.01]);
    }

    #[test]
    fn gamma_below_one_is_rejected_with_field_message() {
        let bad = SMOKE.replace("gamma = 2.0", "gamma = 0.5");
        let err = parse_config(&bad).unwrap_err();
        let text = err.to_string();
        assert!(
            text.contains("gamma") && text.contains("> 1 required"),
            "{text}"
        );
    }

    #[test]
    fn increasing_delta_schedule_is_rejected() {
        let bad = SMOKE.replace("delta_schedule = 0.1, 0.01", "delta_schedule = 0.01, 0.1");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("decreasing"), "{err}");
    }

    #[test]
    fn unknown_keys_and_all_violations_reported_together() {
        let bad = SMOKE.replace("gamma = 2.0", "gamma = 0.5\nbogus_key = 1");
        let err = parse_config(&bad).unwrap_err();
        let text = err.to_string();
        assert!(
            text.contains("bogus_key") && text.contains("gamma"),
            "{text}"
        );
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = parse_config(SMOKE).unwrap();
        let b = parse_config(SMOKE).unwrap();
        assert_eq!(
            config_hash(&a.canonical_text),
            config_hash(&b.canonical_text)
        );
        let c = parse_config(&SMOKE.replace("nx = 16", "nx = 32")).unwrap();
        assert_ne!(
            config_hash(&a.canonical_text),
            config_hash(&c.canonical_text)
        );
    }
}
