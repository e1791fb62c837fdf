//! Kirchhoff transform for the decoupled species problem: the antiderivative
//! of the diffusion coefficient `h(x) = D0 M e^x + eps`, normalized to vanish
//! at zero, and its inverse. `H` is a strictly increasing bijection of the
//! reals for `eps > 0`, linear like `eps y` far below zero and exponential
//! far above.

/// `H(w) = D0 M (e^w - 1) + eps w`.
#[inline]
pub fn kirchhoff(w: f64, d0m: f64, eps: f64) -> f64 {
    d0m * (w.exp() - 1.0) + eps * w
}

#[inline]
fn kirchhoff_deriv(w: f64, d0m: f64, eps: f64) -> f64 {
    d0m * w.exp() + eps
}

/// Inverse of [`kirchhoff`] by safeguarded Newton with a bisection fallback;
/// the result satisfies `|H(H^-1(W)) - W| <= 1e-12 (1 + |W|)`.
pub fn kirchhoff_inverse(w_target: f64, d0m: f64, eps: f64) -> f64 {
    assert!(
        d0m > 0.0 && eps > 0.0,
        "Kirchhoff inverse needs positive coefficients"
    );
    let tol = 1e-12 * (1.0 + w_target.abs());
    // Bracket the root by doubling outward from a cheap initial guess.
    let mut x = if w_target >= 0.0 {
        ((w_target + d0m) / d0m).ln().min(w_target / eps)
    } else {
        (w_target / eps).max(-(d0m / eps) - 1.0).min(-1e-12)
    };
    if !x.is_finite() {
        x = 0.0;
    }
    let (mut lo, mut hi);
    if kirchhoff(x, d0m, eps) < w_target {
        lo = x;
        let mut step = 1.0;
        loop {
            let cand = lo + step;
            if kirchhoff(cand, d0m, eps) >= w_target {
                hi = cand;
                break;
            }
            lo = cand;
            step *= 2.0;
        }
    } else {
        hi = x;
        let mut step = 1.0;
        loop {
            let cand = hi - step;
            if kirchhoff(cand, d0m, eps) <= w_target {
                lo = cand;
                break;
            }
            hi = cand;
            step *= 2.0;
        }
    }
    // Safeguarded Newton: bisect whenever the Newton point leaves the
    // bracket, fails to halve it, or the evaluation overflows. This bounds
    // the iteration count by that of plain bisection.
    // Each Newton step must land in the bracket and at least halve the
    // previous step, else bisect; this bounds the count by ~2x bisection.
    let mut xk = 0.5 * (lo + hi);
    let mut step_old = hi - lo;
    for _ in 0..300 {
        let f = kirchhoff(xk, d0m, eps) - w_target;
        if f.abs() <= tol {
            return polish(xk, w_target, d0m, eps);
        }
        if f > 0.0 {
            hi = xk;
        } else {
            lo = xk;
        }
        let d = kirchhoff_deriv(xk, d0m, eps);
        let newton = xk - f / d;
        let take_newton = f.is_finite()
            && d.is_finite()
            && newton > lo
            && newton < hi
            && (newton - xk).abs() <= 0.5 * step_old;
        let next = if take_newton { newton } else { 0.5 * (lo + hi) };
        step_old = (next - xk).abs();
        xk = next;
    }
    xk
}

/// A few extra Newton steps push the defect to its rounding floor, which
/// tightens the inverse in the flat tail where the flux tolerance alone
/// leaves visible slack in `x`.
fn polish(mut xk: f64, w_target: f64, d0m: f64, eps: f64) -> f64 {
    let mut f = kirchhoff(xk, d0m, eps) - w_target;
    for _ in 0..4 {
        if f == 0.0 {
            break;
        }
        let cand = xk - f / kirchhoff_deriv(xk, d0m, eps);
        let fc = kirchhoff(cand, d0m, eps) - w_target;
        if !cand.is_finite() || fc.abs() >= f.abs() {
            break;
        }
        xk = cand;
        f = fc;
    }
    xk
}
