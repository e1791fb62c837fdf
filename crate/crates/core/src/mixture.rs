//! Pointwise constitutive relations for the reacting mixture: pressure,
//! internal energy, entropy and Gibbs functions, production rates, transport
//! coefficients and their homotopy blends, viscous stress, and fluxes.
//!
//! All molar masses are unity, so mass fractions and molar fractions agree
//! and the molecular pressure reduces to `rho * theta`. The temperature
//! exponent in the conductivities is fixed at 3.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Temperature exponent in kappa and L.
pub const ALPHA: f64 = 3.0;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("invalid mixture specification: {0}")]
    InvalidSpec(String),
    #[error("thermodynamic state outside domain: {0}")]
    DomainError(String),
    #[error("homotopy parameter lambda = {0} outside [0, 1]")]
    LambdaRange(f64),
}

/// Mixture definition: species count, exponents, specific heats, and the
/// coefficient constants of the constitutive closures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// Number of constituents (>= 2).
    pub n: usize,
    /// Adiabatic exponent of the cold pressure (> 1).
    pub gamma: f64,
    /// Specific heats at constant volume, one per species (> 0).
    pub c_v: Vec<f64>,
    /// Baseline diffusion constant (> 0).
    pub d0: f64,
    /// Baseline heat conductivity constant (> 0).
    pub kappa0: f64,
    /// Baseline boundary heat-exchange constant (> 0).
    pub l0: f64,
    /// Production-rate strength (>= 0).
    pub lambda_rate: f64,
    /// Production clamp bound (> 0).
    pub b_omega: f64,
    /// Boundary friction coefficient (>= 0).
    pub f_fric: f64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.n < 2 {
            return Err(MixtureError::InvalidSpec(format!(
                "species count {} < 2",
                self.n
            )));
        }
        if !(self.gamma > 1.0) {
            return Err(MixtureError::InvalidSpec(format!(
                "gamma = {} must be > 1",
                self.gamma
            )));
        }
        if self.c_v.len() != self.n {
            return Err(MixtureError::InvalidSpec(format!(
                "c_v has {} entries for {} species",
                self.c_v.len(),
                self.n
            )));
        }
        if self.c_v.iter().any(|&c| !(c > 0.0)) {
            return Err(MixtureError::InvalidSpec(
                "all c_v entries must be positive".into(),
            ));
        }
        for (name, v) in [
            ("D0", self.d0),
            ("kappa0", self.kappa0),
            ("L0", self.l0),
            ("B_omega", self.b_omega),
        ] {
            if !(v > 0.0) {
                return Err(MixtureError::InvalidSpec(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(self.lambda_rate >= 0.0) || !(self.f_fric >= 0.0) {
            return Err(MixtureError::InvalidSpec(
                "Lambda and f_fric must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Specific heat at constant pressure, `c_p = c_v + 1` (unit molar mass).
    #[inline]
    pub fn c_p(&self, k: usize) -> f64 {
        self.c_v[k] + 1.0
    }

    /// A two-species mixture with unit constants; the common test fixture.
    pub fn two_species() -> Self {
        MixtureSpec {
            n: 2,
            gamma: 2.0,
            c_v: vec![1.5, 1.5],
            d0: 1.0,
            kappa0: 1.0,
            l0: 1.0,
            lambda_rate: 1.0,
            b_omega: 100.0,
            f_fric: 0.0,
        }
    }
}

/// Pointwise thermodynamic state: density, temperature, mass fractions.
/// Positivity of every entry is a construction invariant of the log-variable
/// solvers; the unit-sum of `y` holds only in the vanishing-regularization
/// limit and is not assumed here.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermoPoint {
    pub rho: f64,
    pub theta: f64,
    pub y: Vec<f64>,
}

impl ThermoPoint {
    pub fn new(rho: f64, theta: f64, y: Vec<f64>) -> Result<Self, MixtureError> {
        if !(rho > 0.0) || !(theta > 0.0) || y.iter().any(|&v| !(v > 0.0)) {
            return Err(MixtureError::DomainError(format!(
                "rho = {rho}, theta = {theta}, y = {y:?} must be strictly positive"
            )));
        }
        Ok(ThermoPoint { rho, theta, y })
    }
}

/// Total pressure `rho^gamma + rho * theta` (cold plus molecular part).
#[inline]
pub fn pressure(rho: f64, theta: f64, spec: &MixtureSpec) -> f64 {
    rho.powf(spec.gamma) + rho * theta
}

/// Derivative of the pressure with respect to density at fixed temperature.
#[inline]
pub fn pressure_drho(rho: f64, theta: f64, spec: &MixtureSpec) -> f64 {
    spec.gamma * rho.powf(spec.gamma - 1.0) + theta
}

/// Specific internal energy `rho^(gamma-1)/(gamma-1) + theta sum_k c_vk Y_k`.
pub fn internal_energy(pt: &ThermoPoint, spec: &MixtureSpec) -> f64 {
    let cold = pt.rho.powf(spec.gamma - 1.0) / (spec.gamma - 1.0);
    let mix: f64 = spec.c_v.iter().zip(&pt.y).map(|(c, y)| c * y).sum();
    cold + pt.theta * mix
}

/// Per-species entropy, enthalpy and Gibbs functions.
#[derive(Clone, Debug)]
pub struct GibbsSet {
    /// s_k = c_vk log(theta) - log(rho Y_k)
    pub s_k: Vec<f64>,
    /// s = sum Y_k s_k
    pub s: f64,
    /// h_k = c_pk theta
    pub h_k: Vec<f64>,
    /// g_k = h_k - theta s_k
    pub g_k: Vec<f64>,
    /// g = sum Y_k g_k
    pub g: f64,
}

/// Evaluates entropies, enthalpies and Gibbs functions at a state.
pub fn entropy_gibbs(pt: &ThermoPoint, spec: &MixtureSpec) -> Result<GibbsSet, MixtureError> {
    if !(pt.theta > 0.0) {
        return Err(MixtureError::DomainError(format!(
            "theta = {} must be positive",
            pt.theta
        )));
    }
    let mut s_k = Vec::with_capacity(spec.n);
    let mut h_k = Vec::with_capacity(spec.n);
    let mut g_k = Vec::with_capacity(spec.n);
    for k in 0..spec.n {
        let rho_k = pt.rho * pt.y[k];
        if !(rho_k > 0.0) {
            return Err(MixtureError::DomainError(format!(
                "partial density rho Y_{k} = {rho_k} must be positive"
            )));
        }
        let sk = spec.c_v[k] * pt.theta.ln() - rho_k.ln();
        let hk = spec.c_p(k) * pt.theta;
        s_k.push(sk);
        h_k.push(hk);
        g_k.push(hk - pt.theta * sk);
    }
    let s = s_k.iter().zip(&pt.y).map(|(sk, y)| sk * y).sum();
    let g = g_k.iter().zip(&pt.y).map(|(gk, y)| gk * y).sum();
    Ok(GibbsSet {
        s_k,
        s,
        h_k,
        g_k,
        g,
    })
}

/// Normalized chemical affinities `v_k = (g_k - mean(g)) / theta`. The
/// `theta log(rho)` contributions cancel in the difference, so the result
/// depends on the mass fractions and temperature only.
pub fn affinities(theta: f64, y: &[f64], spec: &MixtureSpec) -> Result<Vec<f64>, MixtureError> {
    if !(theta > 0.0) || y.iter().any(|&v| !(v > 0.0)) {
        return Err(MixtureError::DomainError(format!(
            "theta = {theta}, y = {y:?} must be positive"
        )));
    }
    let log_theta = theta.ln();
    // g_k / theta with the rho-term dropped (it is species-independent):
    // c_pk - c_vk log(theta) + log(Y_k).
    let raw: Vec<f64> = (0..spec.n)
        .map(|k| spec.c_p(k) - spec.c_v[k] * log_theta + y[k].ln())
        .collect();
    let mean = raw.iter().sum::<f64>() / spec.n as f64;
    Ok(raw.iter().map(|v| v - mean).collect())
}

/// Molar production rates: the scalar-rescaled affinity model
/// `omega_k = -Lambda s(v) v_k` with `s(v) = min(1, B_omega / max|v_k|)`.
///
/// The model guarantees `sum omega_k = 0` exactly (the smallest-affinity
/// component closes the sum), `sum omega_k g_k <= 0`, and `|omega_k| <=
/// Lambda B_omega`. Equilibrium is at equal Gibbs functions.
pub fn production_rates(
    theta: f64,
    y: &[f64],
    spec: &MixtureSpec,
) -> Result<Vec<f64>, MixtureError> {
    let v = affinities(theta, y, spec)?;
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut omega = vec![0.0; spec.n];
    if vmax == 0.0 || spec.lambda_rate == 0.0 {
        return Ok(omega);
    }
    // A hair of headroom under the clamp leaves room for the closing
    // element's rounding without breaching the bound.
    let b_eff = spec.b_omega * (1.0 - 1e-12);
    if vmax <= b_eff {
        for k in 0..spec.n {
            omega[k] = -spec.lambda_rate * v[k];
        }
    } else {
        for k in 0..spec.n {
            // |v_k / vmax| <= 1 exactly, keeping the clamp bound sharp.
            omega[k] = -spec.lambda_rate * b_eff * (v[k] / vmax);
        }
    }
    // The last component closes the sum in the same left-to-right order a
    // plain summation uses, so the total vanishes bitwise.
    let partial: f64 = omega[..spec.n - 1].iter().sum();
    omega[spec.n - 1] = -partial;
    Ok(omega)
}

/// Physical transport coefficients `(kappa, D, L)` at a state:
/// `kappa = kappa0 rho (1 + theta^3)`, `D = D0 rho`, `L = L0 rho (1 + theta^3)`.
/// All scale linearly with density, matching the mean-density equivalence
/// the high-density regime requires.
pub fn transport_coefficients(pt: &ThermoPoint, spec: &MixtureSpec) -> (f64, f64, f64) {
    let growth = 1.0 + pt.theta.powi(ALPHA as i32);
    (
        spec.kappa0 * pt.rho * growth,
        spec.d0 * pt.rho,
        spec.l0 * pt.rho * growth,
    )
}

/// Homotopy-blended coefficients `(kappa_bar_lambda, D_lambda, L_lambda)`:
/// the mean-density anchor plus `lambda` times the deviation of the physical
/// coefficient from it.
pub fn blended_coefficients(
    pt: &ThermoPoint,
    m: f64,
    lambda: f64,
    spec: &MixtureSpec,
) -> Result<(f64, f64, f64), MixtureError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MixtureError::LambdaRange(lambda));
    }
    let growth = 1.0 + pt.theta.powi(ALPHA as i32);
    let (kappa, d, l) = transport_coefficients(pt, spec);
    let kappa_anchor = spec.kappa0 * m * growth;
    let d_anchor = spec.d0 * m;
    let l_anchor = spec.l0 * m * growth;
    Ok((
        kappa_anchor + lambda * (kappa - kappa_anchor),
        d_anchor + lambda * (d - d_anchor),
        l_anchor + lambda * (l - l_anchor),
    ))
}

/// Viscous stress `S = 2 rho D(u)` for a 2x2 velocity gradient, returned
/// row-major as `[s11, s12, s21, s22]` (symmetric).
pub fn viscous_stress(rho: f64, grad_u: [[f64; 2]; 2]) -> [f64; 4] {
    let d11 = grad_u[0][0];
    let d12 = 0.5 * (grad_u[0][1] + grad_u[1][0]);
    let d22 = grad_u[1][1];
    [
        2.0 * rho * d11,
        2.0 * rho * d12,
        2.0 * rho * d12,
        2.0 * rho * d22,
    ]
}

/// `S : grad(u) = 2 rho |D(u)|^2`; the viscous dissipation density.
pub fn viscous_dissipation(rho: f64, grad_u: [[f64; 2]; 2]) -> f64 {
    let d11 = grad_u[0][0];
    let d12 = 0.5 * (grad_u[0][1] + grad_u[1][0]);
    let d22 = grad_u[1][1];
    2.0 * rho * (d11 * d11 + 2.0 * d12 * d12 + d22 * d22)
}

/// Pointwise fluxes at a state: per-species diffusion fluxes, Fourier flux,
/// total heat flux, and the regularized species fluxes of the fixed-point
/// system.
#[derive(Clone, Debug)]
pub struct FluxSet {
    /// F_k = -D grad(Y_k)
    pub f_k: Vec<[f64; 2]>,
    /// q = -kappa grad(theta)
    pub q: [f64; 2],
    /// Q = q + sum h_k F_k
    pub q_total: [f64; 2],
    /// J_k = -(D_lambda + (eps + delta Y_k)/Y_k) grad(Y_k)
    pub j_k: Vec<[f64; 2]>,
}

/// Regularization and blend parameters entering the J_k fluxes.
#[derive(Clone, Copy, Debug)]
pub struct FluxParams {
    pub d_lambda: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Evaluates all pointwise fluxes from a state and its gradients.
pub fn fluxes(
    pt: &ThermoPoint,
    grad_theta: [f64; 2],
    grad_y: &[[f64; 2]],
    spec: &MixtureSpec,
    params: FluxParams,
) -> Result<FluxSet, MixtureError> {
    let (kappa, d, _) = transport_coefficients(pt, spec);
    let gibbs = entropy_gibbs(pt, spec)?;
    let mut f_k = Vec::with_capacity(spec.n);
    let mut j_k = Vec::with_capacity(spec.n);
    let mut q_total = [-kappa * grad_theta[0], -kappa * grad_theta[1]];
    let q = q_total;
    for k in 0..spec.n {
        let fk = [-d * grad_y[k][0], -d * grad_y[k][1]];
        q_total[0] += gibbs.h_k[k] * fk[0];
        q_total[1] += gibbs.h_k[k] * fk[1];
        f_k.push(fk);
        let yk = pt.y[k];
        if !(yk > 0.0) {
            return Err(MixtureError::DomainError(format!(
                "Y_{k} = {yk} must be positive to form J_k"
            )));
        }
        let coeff = params.d_lambda + (params.eps + params.delta * yk) / yk;
        j_k.push([-coeff * grad_y[k][0], -coeff * grad_y[k][1]]);
    }
    Ok(FluxSet {
        f_k,
        q,
        q_total,
        j_k,
    })
}

/// The norm limiter `g(x) = max(1, x / C0)` of the homotopy map.
#[inline]
pub fn cap_function(x: f64, c0: f64) -> f64 {
    debug_assert!(x >= 0.0 && c0 > 0.0);
    (x / c0).max(1.0)
}
