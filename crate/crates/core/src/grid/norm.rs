//! Quadrature and discrete Lebesgue/Sobolev norms.
//!
//! Integration uses the finite-volume control areas (trapezoid rule), the
//! same weights the flux-form operators telescope against. Sobolev norms are
//! realized as the Lp norm of the value plus the Lp norm of the gradient
//! field (plus all second differences for the W2p variant); bound constants
//! quoted elsewhere are tied to this realization.

use super::ops::{ddx, ddy, gradient};
use super::{GridError, GridSpec, ScalarField, VectorField};

/// Norm selector. `p` may be `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Lp(f64),
    W1p(f64),
    W2p(f64),
    L2Boundary,
}

/// Trapezoidal quadrature over the rectangle.
pub fn integrate(grid: &GridSpec, f: &ScalarField) -> f64 {
    let mut acc = 0.0;
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            acc += grid.volume(i, j) * f.at(i, j);
        }
    }
    acc
}

/// Trapezoidal quadrature along the boundary (all four sides).
pub fn integrate_boundary(grid: &GridSpec, f: &ScalarField) -> f64 {
    let mut acc = 0.0;
    for (i, j) in grid.boundary_nodes() {
        acc += grid.boundary_weight(i, j) * f.at(i, j);
    }
    acc
}

fn check_p(p: f64) -> Result<(), GridError> {
    if p.is_nan() || p < 1.0 {
        return Err(GridError::InvalidExponent(p));
    }
    Ok(())
}

fn lp_volume(grid: &GridSpec, f: &ScalarField, p: f64) -> f64 {
    if p.is_infinite() {
        return f.max_abs();
    }
    let mut acc = 0.0;
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            acc += grid.volume(i, j) * f.at(i, j).abs().powf(p);
        }
    }
    acc.powf(1.0 / p)
}

fn lp_of_magnitude(grid: &GridSpec, v: &VectorField, p: f64) -> f64 {
    let mag = ScalarField::from_fn(grid, |_, _| 0.0);
    let mut mag = mag;
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            *mag.at_mut(i, j) = v.x.at(i, j).hypot(v.y.at(i, j));
        }
    }
    lp_volume(grid, &mag, p)
}

/// Discrete norm of a scalar field.
pub fn norm(grid: &GridSpec, f: &ScalarField, kind: NormKind) -> Result<f64, GridError> {
    match kind {
        NormKind::Lp(p) => {
            check_p(p)?;
            Ok(lp_volume(grid, f, p))
        }
        NormKind::W1p(p) => {
            check_p(p)?;
            let grad = gradient(grid, f);
            Ok(lp_volume(grid, f, p) + lp_of_magnitude(grid, &grad, p))
        }
        NormKind::W2p(p) => {
            check_p(p)?;
            let gx = ddx(grid, f);
            let gy = ddy(grid, f);
            let fxx = ddx(grid, &gx);
            let fxy = ddy(grid, &gx);
            let fyx = ddx(grid, &gy);
            let fyy = ddy(grid, &gy);
            let mut hess = ScalarField::zeros(grid);
            for j in 0..=grid.ny {
                for i in 0..=grid.nx {
                    let s = fxx.at(i, j).powi(2)
                        + fxy.at(i, j).powi(2)
                        + fyx.at(i, j).powi(2)
                        + fyy.at(i, j).powi(2);
                    *hess.at_mut(i, j) = s.sqrt();
                }
            }
            let grad = VectorField { x: gx, y: gy };
            Ok(lp_volume(grid, f, p) + lp_of_magnitude(grid, &grad, p) + lp_volume(grid, &hess, p))
        }
        NormKind::L2Boundary => {
            let mut acc = 0.0;
            for (i, j) in grid.boundary_nodes() {
                acc += grid.boundary_weight(i, j) * f.at(i, j).powi(2);
            }
            Ok(acc.sqrt())
        }
    }
}

/// Boundary Lp norm (used by the bound ledger for trace quantities).
pub fn norm_boundary_lp(grid: &GridSpec, f: &ScalarField, p: f64) -> Result<f64, GridError> {
    check_p(p)?;
    if p.is_infinite() {
        let mut m = 0.0f64;
        for (i, j) in grid.boundary_nodes() {
            m = m.max(f.at(i, j).abs());
        }
        return Ok(m);
    }
    let mut acc = 0.0;
    for (i, j) in grid.boundary_nodes() {
        acc += grid.boundary_weight(i, j) * f.at(i, j).abs().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// Sum of per-component norms; the vector-field Sobolev norm realization.
pub fn norm_vector(grid: &GridSpec, v: &VectorField, kind: NormKind) -> Result<f64, GridError> {
    Ok(norm(grid, &v.x, kind)? + norm(grid, &v.y, kind)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrals_match_area_and_perimeter() {
        let g = GridSpec::new(2.0, 3.0, 8, 9).unwrap();
        let f = ScalarField::constant(&g, 1.0);
        assert!((integrate(&g, &f) - 6.0).abs() < 1e-12);
        assert!((integrate_boundary(&g, &f) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sup_norm_of_coordinate_function() {
        let g = GridSpec::unit_square(10);
        let f = ScalarField::from_fn(&g, |x, _| x);
        assert_eq!(norm(&g, &f, NormKind::Lp(f64::INFINITY)).unwrap(), 1.0);
    }

    #[test]
    fn l2_of_sine_squared_approaches_half() {
        // ||sin(pi x)||_2^2 on the unit square is 1/2. The integrand is
        // periodic, so the trapezoid rule is exact to roundoff here.
        let pi = std::f64::consts::PI;
        let g = GridSpec::unit_square(16);
        let f = ScalarField::from_fn(&g, |x, _| (pi * x).sin());
        let l2 = norm(&g, &f, NormKind::Lp(2.0)).unwrap();
        assert!((l2 * l2 - 0.5).abs() < 1e-12, "{}", l2 * l2);
    }

    #[test]
    fn quadrature_is_second_order_on_nonperiodic_integrand() {
        // ||e^x||_2^2 = (e^2 - 1)/2 on the unit square; trapezoid error O(h^2).
        let exact = (std::f64::consts::E.powi(2) - 1.0) / 2.0;
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::unit_square(n);
            let f = ScalarField::from_fn(&g, |x, _| x.exp());
            let l2 = norm(&g, &f, NormKind::Lp(2.0)).unwrap();
            errs.push((l2 * l2 - exact).abs());
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 1.9 && s2 > 1.9, "slopes {s1} {s2}");
    }

    #[test]
    fn invalid_exponent_rejected() {
        let g = GridSpec::unit_square(8);
        let f = ScalarField::constant(&g, 1.0);
        assert!(norm(&g, &f, NormKind::Lp(0.5)).is_err());
        assert!(norm(&g, &f, NormKind::W1p(f64::NAN)).is_err());
    }

    #[test]
    fn discrete_integration_by_parts_is_second_order() {
        // integral(f div v) + integral(grad f . v) - boundary(f v.n) -> 0 at O(h^2).
        let pi = std::f64::consts::PI;
        let mut defects = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::unit_square(n);
            let f =
                ScalarField::from_fn(&g, |x, y| (pi * x).cos() * (0.5 * pi * y).sin() + 0.3 * x);
            let v = VectorField::from_fn(&g, |x, y| {
                ((pi * y).sin() + x * 0.2, (pi * x).cos() * 0.4 + y * y * 0.1)
            });
            let divv = super::super::ops::divergence(&g, &v);
            let gradf = gradient(&g, &f);
            let mut t1 = ScalarField::zeros(&g);
            let mut t2 = ScalarField::zeros(&g);
            for j in 0..=g.ny {
                for i in 0..=g.nx {
                    *t1.at_mut(i, j) = f.at(i, j) * divv.at(i, j);
                    *t2.at_mut(i, j) =
                        gradf.x.at(i, j) * v.x.at(i, j) + gradf.y.at(i, j) * v.y.at(i, j);
                }
            }
            let mut bnd = 0.0;
            for (i, j) in g.boundary_nodes() {
                if let Some((nx_, ny_)) = g.normal(i, j) {
                    bnd += g.boundary_weight(i, j)
                        * f.at(i, j)
                        * (v.x.at(i, j) * nx_ + v.y.at(i, j) * ny_);
                } else {
                    // Corner: sum both side contributions with their own normals.
                    let sx = if i == 0 { -1.0 } else { 1.0 };
                    let sy = if j == 0 { -1.0 } else { 1.0 };
                    bnd += g.hy() * 0.5 * f.at(i, j) * v.x.at(i, j) * sx;
                    bnd += g.hx() * 0.5 * f.at(i, j) * v.y.at(i, j) * sy;
                }
            }
            defects.push((integrate(&g, &t1) + integrate(&g, &t2) - bnd).abs());
        }
        let s1 = (defects[0] / defects[1]).log2();
        let s2 = (defects[1] / defects[2]).log2();
        assert!(s1 > 1.9 && s2 > 1.9, "slopes {s1} {s2} from {defects:?}");
    }
}
