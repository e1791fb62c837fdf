//! Generic Newton driver for scalar quasilinear elliptic problems in
//! finite-volume flux form:
//!
//! ```text
//! -div( a(x, v) grad v ) + s(x, v) = f(x)      in the rectangle,
//! -a grad(v) . n = g(x, v)                      on the boundary,
//! ```
//!
//! with nodal coefficient evaluation, arithmetic face averaging, half-cell
//! flux balances at the boundary, and a backtracking line search. Species,
//! thermal, and Kirchhoff-transformed solves all instantiate this driver.

use crate::grid::{GridSpec, ScalarField};
use crate::linalg::BandMatrix;

#[cfg(test)]
use super::OVERFLOW_GUARD;
use super::{l2_norm, SubsolveStats, SubsolverConfig, SubsolverError};

/// Coefficient callbacks of one scalar problem. All closures take the node
/// index and the current value there and return `(value, d/dv)`.
pub struct ScalarProblem<'a, D, S, B>
where
    D: Fn(usize, f64) -> (f64, f64),
    S: Fn(usize, f64) -> (f64, f64),
    B: Fn(usize, f64) -> (f64, f64),
{
    pub grid: &'a GridSpec,
    pub diffusion: D,
    pub reaction: S,
    /// Outward boundary flux `g` by node index; applied on every incident face.
    pub robin: B,
    pub source: &'a ScalarField,
    pub name: &'static str,
    /// Blow-up threshold on the unknown; log variables use
    /// [`OVERFLOW_GUARD`], transformed variables scale it by their range.
    pub guard: f64,
}

/// Assembles the residual and, optionally, the Jacobian of the problem at `v`.
fn assemble<D, S, B>(
    p: &ScalarProblem<'_, D, S, B>,
    v: &ScalarField,
    residual: &mut [f64],
    mut jac: Option<&mut BandMatrix>,
) where
    D: Fn(usize, f64) -> (f64, f64),
    S: Fn(usize, f64) -> (f64, f64),
    B: Fn(usize, f64) -> (f64, f64),
{
    let g = p.grid;
    let (hx, hy) = (g.hx(), g.hy());
    residual.fill(0.0);

    let nn = g.n_nodes();
    let mut a = vec![0.0; nn];
    let mut da = vec![0.0; nn];
    for n in 0..nn {
        let (av, dv) = (p.diffusion)(n, v.get(n));
        a[n] = av;
        da[n] = dv;
    }

    let ctrl_len =
        |idx: usize, end: usize, h: f64| if idx == 0 || idx == end { 0.5 * h } else { h };

    // Interior faces: each face contributes -F/len to its low node and
    // +F/len to its high node, F = a_face (v_hi - v_lo)/h.
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let n = g.idx(i, j);
            // East face (i, j) -- (i+1, j).
            if i < g.nx {
                let m = g.idx(i + 1, j);
                let af = 0.5 * (a[n] + a[m]);
                let dvf = (v.get(m) - v.get(n)) / hx;
                let flux = af * dvf;
                let len_lo = ctrl_len(i, g.nx, hx);
                let len_hi = ctrl_len(i + 1, g.nx, hx);
                residual[n] -= flux / len_lo;
                residual[m] += flux / len_hi;
                if let Some(jm) = jac.as_deref_mut() {
                    let dflux_dlo = 0.5 * da[n] * dvf - af / hx;
                    let dflux_dhi = 0.5 * da[m] * dvf + af / hx;
                    jm.add(n, n, -dflux_dlo / len_lo);
                    jm.add(n, m, -dflux_dhi / len_lo);
                    jm.add(m, n, dflux_dlo / len_hi);
                    jm.add(m, m, dflux_dhi / len_hi);
                }
            }
            // North face (i, j) -- (i, j+1).
            if j < g.ny {
                let m = g.idx(i, j + 1);
                let af = 0.5 * (a[n] + a[m]);
                let dvf = (v.get(m) - v.get(n)) / hy;
                let flux = af * dvf;
                let len_lo = ctrl_len(j, g.ny, hy);
                let len_hi = ctrl_len(j + 1, g.ny, hy);
                residual[n] -= flux / len_lo;
                residual[m] += flux / len_hi;
                if let Some(jm) = jac.as_deref_mut() {
                    let dflux_dlo = 0.5 * da[n] * dvf - af / hy;
                    let dflux_dhi = 0.5 * da[m] * dvf + af / hy;
                    jm.add(n, n, -dflux_dlo / len_lo);
                    jm.add(n, m, -dflux_dhi / len_lo);
                    jm.add(m, n, dflux_dlo / len_hi);
                    jm.add(m, m, dflux_dhi / len_hi);
                }
            }
        }
    }

    // Zeroth-order term, source, and boundary fluxes.
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let n = g.idx(i, j);
            let (s, ds) = (p.reaction)(n, v.get(n));
            residual[n] += s - p.source.get(n);
            if let Some(jm) = jac.as_deref_mut() {
                jm.add(n, n, ds);
            }
            if g.is_boundary(i, j) {
                let (gv, dgv) = (p.robin)(n, v.get(n));
                let mut scale = 0.0;
                if i == 0 || i == g.nx {
                    scale += 2.0 / hx;
                }
                if j == 0 || j == g.ny {
                    scale += 2.0 / hy;
                }
                residual[n] += gv * scale;
                if let Some(jm) = jac.as_deref_mut() {
                    jm.add(n, n, dgv * scale);
                }
            }
        }
    }
}

/// Newton iteration with backtracking line search and overflow guarding.
pub fn solve_scalar_newton<D, S, B>(
    p: &ScalarProblem<'_, D, S, B>,
    init: &ScalarField,
    config: &SubsolverConfig,
) -> Result<(ScalarField, SubsolveStats), SubsolverError>
where
    D: Fn(usize, f64) -> (f64, f64),
    S: Fn(usize, f64) -> (f64, f64),
    B: Fn(usize, f64) -> (f64, f64),
{
    let g = p.grid;
    let nn = g.n_nodes();
    let band = g.nx + 1;
    let mut v = init.clone();
    guard(p.name, &v, p.guard)?;

    let mut res = vec![0.0; nn];
    assemble(p, &v, &mut res, None);
    let res0 = l2_norm(&res);
    let mut stats = SubsolveStats::new(p.name, res0);
    // The source norm is the data scale of the problem; a warm start close
    // to the root must not push the target below the attainable floor. The
    // floor itself is set by differencing the stiff flux terms in rounded
    // arithmetic.
    let data_scale = l2_norm(p.source.values());
    let floor = {
        let hmin = g.hx().min(g.hy());
        let mut a_v_max = 0.0f64;
        for node in 0..nn {
            let vn = init.get(node);
            let (a, _) = (p.diffusion)(node, vn);
            a_v_max = a_v_max.max(a * vn.abs().max(0.1));
        }
        f64::EPSILON * a_v_max / (hmin * hmin) * (nn as f64).sqrt()
    };
    let target = (config.newton_tol * (1.0 + res0.max(data_scale))).max(8.0 * floor);
    let grace = 50.0 * target;
    let mut slow_steps = 0usize;
    let mut res_norm = res0;

    while res_norm > target {
        if stats.iterations >= config.max_newton {
            return Err(SubsolverError::NonConvergence {
                solver: p.name,
                residual: res_norm,
                iterations: stats.iterations,
            });
        }
        let mut jac = BandMatrix::new(nn, band, band);
        assemble(p, &v, &mut res, Some(&mut jac));
        stats.factorizations += 1;
        let lu = jac
            .factor()
            .map_err(|e| SubsolverError::SingularLinearSystem {
                solver: p.name,
                source: e,
            })?;
        let mut step = res.clone();
        for x in &mut step {
            *x = -*x;
        }
        lu.solve_in_place(&mut step);

        if std::env::var_os("MIXSTEADY_NEWTON_TRACE").is_some() {
            eprintln!(
                "{} iter {}: res {res_norm:e} step {:e}",
                p.name,
                stats.iterations,
                l2_norm(&step)
            );
        }
        // Backtracking line search on the residual norm.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = v.clone();
            for (n, val) in trial.values_mut().iter_mut().enumerate() {
                *val += t * step[n];
            }
            if trial
                .values()
                .iter()
                .any(|x| !x.is_finite() || x.abs() > p.guard)
            {
                t *= config.backtrack;
                continue;
            }
            assemble(p, &trial, &mut res, None);
            let trial_norm = l2_norm(&res);
            if trial_norm.is_finite() && trial_norm <= (1.0 - 1e-4 * t) * res_norm {
                if std::env::var_os("MIXSTEADY_NEWTON_TRACE").is_some() {
                    eprintln!("{}   accepted t = {t:e} -> {trial_norm:e}", p.name);
                }
                v = trial;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            t *= config.backtrack;
        }
        if !accepted {
            // No descent found: either converged to the attainable floor or stuck.
            if res_norm <= grace {
                break;
            }
            return Err(SubsolverError::NonConvergence {
                solver: p.name,
                residual: res_norm,
                iterations: stats.iterations,
            });
        }
        stats.push(res_norm);
        // Newton grinding near the floor is convergence, not failure.
        let ratio = stats.last_step_ratio().unwrap_or(0.0);
        if ratio > 0.9 {
            slow_steps += 1;
            if slow_steps >= 2 && res_norm <= grace {
                break;
            }
        } else {
            slow_steps = 0;
        }
    }
    guard(p.name, &v, p.guard)?;
    Ok((v, stats))
}

fn guard(name: &'static str, v: &ScalarField, bound: f64) -> Result<(), SubsolverError> {
    for &x in v.values() {
        if !x.is_finite() || x.abs() > bound {
            return Err(SubsolverError::OverflowGuard {
                solver: name,
                value: x,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn linear_poisson_with_mass_term_recovers_constant() {
        // -lap v + v = c has the constant solution v = c with zero flux.
        let g = GridSpec::unit_square(12);
        let src = ScalarField::constant(&g, 3.25);
        let p = ScalarProblem {
            grid: &g,
            diffusion: |_, _| (1.0, 0.0),
            reaction: |_, v| (v, 1.0),
            robin: |_, _| (0.0, 0.0),
            source: &src,
            name: "test",
            guard: OVERFLOW_GUARD,
        };
        let init = ScalarField::zeros(&g);
        let (v, stats) = solve_scalar_newton(&p, &init, &SubsolverConfig::default()).unwrap();
        for x in v.values() {
            assert!((x - 3.25).abs() < 1e-10);
        }
        assert!(stats.final_residual <= stats.initial_residual);
    }

    #[test]
    fn semilinear_exponential_reaction_converges_quadratically() {
        // -lap v + e^v = e^2 has v = 2; check a superlinear tail.
        let g = GridSpec::unit_square(10);
        let src = ScalarField::constant(&g, 2.0f64.exp());
        let p = ScalarProblem {
            grid: &g,
            diffusion: |_, _| (1.0, 0.0),
            reaction: |_, v: f64| (v.exp(), v.exp()),
            robin: |_, _| (0.0, 0.0),
            source: &src,
            name: "test",
            guard: OVERFLOW_GUARD,
        };
        let init = ScalarField::zeros(&g);
        let (v, stats) = solve_scalar_newton(&p, &init, &SubsolverConfig::default()).unwrap();
        for x in v.values() {
            assert!((x - 2.0).abs() < 1e-9);
        }
        // Final accepted step should have cut the residual by 10x or more.
        let hist = &stats.residual_history;
        if hist.len() >= 2 && hist[hist.len() - 1] > 0.0 {
            let ratio = hist[hist.len() - 1] / hist[hist.len() - 2];
            assert!(ratio < 0.1, "tail ratio {ratio}");
        }
    }

    #[test]
    fn overflow_guard_trips_on_bad_init() {
        let g = GridSpec::unit_square(8);
        let src = ScalarField::zeros(&g);
        let p = ScalarProblem {
            grid: &g,
            diffusion: |_, _| (1.0, 0.0),
            reaction: |_, v| (v, 1.0),
            robin: |_, _| (0.0, 0.0),
            source: &src,
            name: "test",
            guard: OVERFLOW_GUARD,
        };
        let init = ScalarField::constant(&g, 800.0);
        assert!(matches!(
            solve_scalar_newton(&p, &init, &SubsolverConfig::default()),
            Err(SubsolverError::OverflowGuard { .. })
        ));
    }
}
