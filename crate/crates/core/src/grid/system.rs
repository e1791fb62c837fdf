//! Linear scalar elliptic systems on the grid: banded assembly of
//! `-div(a grad u) + c u = f` with Robin data imposed through the
//! finite-volume boundary flux balance (no ghost nodes).

use crate::linalg::{BandMatrix, LinalgError};

use super::{BoundaryField, GridSpec, ScalarField, Side};

/// Banded linear system over the scalar node set.
pub struct ScalarSystem {
    grid: GridSpec,
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
}

impl ScalarSystem {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n_nodes();
        let band = grid.nx + 1;
        ScalarSystem {
            grid: *grid,
            matrix: BandMatrix::new(n, band, band),
            rhs: vec![0.0; n],
        }
    }

    /// Adds the finite-volume `-div(a grad u)` operator with the boundary
    /// flux left out (natural zero-flux closure unless a Robin term is
    /// applied afterwards).
    pub fn add_diffusion(&mut self, a: &ScalarField) {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let row = g.idx(i, j);
                let lenx = if i == 0 || i == g.nx { 0.5 * hx } else { hx };
                let leny = if j == 0 || j == g.ny { 0.5 * hy } else { hy };
                if i < g.nx {
                    let af = 0.5 * (a.at(i, j) + a.at(i + 1, j));
                    let w = af / (hx * lenx);
                    self.matrix.add(row, row, w);
                    self.matrix.add(row, g.idx(i + 1, j), -w);
                }
                if i > 0 {
                    let af = 0.5 * (a.at(i - 1, j) + a.at(i, j));
                    let w = af / (hx * lenx);
                    self.matrix.add(row, row, w);
                    self.matrix.add(row, g.idx(i - 1, j), -w);
                }
                if j < g.ny {
                    let af = 0.5 * (a.at(i, j) + a.at(i, j + 1));
                    let w = af / (hy * leny);
                    self.matrix.add(row, row, w);
                    self.matrix.add(row, g.idx(i, j + 1), -w);
                }
                if j > 0 {
                    let af = 0.5 * (a.at(i, j - 1) + a.at(i, j));
                    let w = af / (hy * leny);
                    self.matrix.add(row, row, w);
                    self.matrix.add(row, g.idx(i, j - 1), -w);
                }
            }
        }
    }

    /// Adds `c u` to the operator.
    pub fn add_mass(&mut self, c: &ScalarField) {
        for j in 0..=self.grid.ny {
            for i in 0..=self.grid.nx {
                let row = self.grid.idx(i, j);
                self.matrix.add(row, row, c.at(i, j));
            }
        }
    }

    pub fn add_rhs(&mut self, f: &ScalarField) {
        for (r, v) in self.rhs.iter_mut().zip(f.values()) {
            *r += v;
        }
    }

    pub fn solve(self) -> Result<ScalarField, LinalgError> {
        let lu = self.matrix.factor()?;
        let mut x = self.rhs;
        lu.solve_in_place(&mut x);
        let mut out = ScalarField::zeros(&self.grid);
        out.values_mut().copy_from_slice(&x);
        Ok(out)
    }
}

/// Imposes the affine Robin condition `-a grad(u) . n = coeff (u - theta) + eps u`
/// on every boundary face through the half-cell flux balance. Corner nodes
/// receive one contribution per incident side, so the discrete operator
/// telescopes exactly against the boundary quadrature.
pub fn apply_robin_bc(
    sys: &mut ScalarSystem,
    coeff: &BoundaryField,
    theta: &BoundaryField,
    eps: f64,
) {
    apply_robin_bc_on_sides(
        sys,
        coeff,
        theta,
        eps,
        &[Side::West, Side::East, Side::South, Side::North],
    );
}

/// Same as [`apply_robin_bc`] but restricted to the listed sides; faces on
/// other sides keep the natural zero-flux closure. Used by one-dimensional
/// verification problems.
pub fn apply_robin_bc_on_sides(
    sys: &mut ScalarSystem,
    coeff: &BoundaryField,
    theta: &BoundaryField,
    eps: f64,
    sides: &[Side],
) {
    let g = sys.grid;
    let (hx, hy) = (g.hx(), g.hy());
    for (i, j) in g.boundary_nodes() {
        let row = g.idx(i, j);
        let b = g.boundary_index(i, j).expect("boundary node");
        let l = coeff.get(b);
        let th = theta.get(b);
        for side in g.sides_of(i, j) {
            if !sides.contains(&side) {
                continue;
            }
            let scale = match side {
                Side::West | Side::East => 2.0 / hx,
                Side::South | Side::North => 2.0 / hy,
            };
            sys.matrix.add(row, row, (l + eps) * scale);
            sys.rhs[row] += l * th * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_state_is_reproduced_exactly() {
        // Boundary data equal to a constant and zero forcing: the constant
        // is the exact discrete solution.
        let g = GridSpec::unit_square(12);
        let a = ScalarField::from_fn(&g, |x, y| 1.0 + x * y);
        let mut sys = ScalarSystem::new(&g);
        sys.add_diffusion(&a);
        let l = BoundaryField::constant(&g, 3.0);
        let th = BoundaryField::constant(&g, 7.5);
        apply_robin_bc(&mut sys, &l, &th, 0.0);
        let u = sys.solve().unwrap();
        for v in u.values() {
            assert!((v - 7.5).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn quadratic_robin_solution_is_exact() {
        // -u'' = 1 on [0,1], flux = 2(u - 0) at x = 0 and x = 1, zero flux in y:
        // u = -x^2/2 + x/2 + 1/4. The half-cell flux balance is exact for
        // quadratics, so the discrete solution matches to roundoff.
        let g = GridSpec::unit_square(16);
        let a = ScalarField::constant(&g, 1.0);
        let mut sys = ScalarSystem::new(&g);
        sys.add_diffusion(&a);
        let l = BoundaryField::constant(&g, 2.0);
        let th = BoundaryField::constant(&g, 0.0);
        apply_robin_bc_on_sides(&mut sys, &l, &th, 0.0, &[Side::West, Side::East]);
        sys.add_rhs(&ScalarField::constant(&g, 1.0));
        let u = sys.solve().unwrap();
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let (x, _) = g.node_xy(i, j);
                let exact = -0.5 * x * x + 0.5 * x + 0.25;
                assert!(
                    (u.at(i, j) - exact).abs() < 1e-9,
                    "at x={x}: {} vs {exact}",
                    u.at(i, j)
                );
            }
        }
    }

    #[test]
    fn sine_forced_robin_problem_converges_at_order_two() {
        // One-dimensional oracle: -u'' = sin(pi x), flux = l (u - 0) at both
        // ends, l = 2. With u = sin(pi x)/pi^2 + B x + C the two Robin
        // conditions give a 2x2 system for (B, C).
        let pi = std::f64::consts::PI;
        let l = 2.0;
        // x=0:  u'(0) = l u(0)    ->  B - l C = -1/pi
        // x=1: -u'(1) = l u(1)    ->  -(1+l) B - l C = -1/pi
        let (a11, a12, b1) = (1.0, -l, -1.0 / pi);
        let (a21, a22, b2) = (-(1.0 + l), -l, -1.0 / pi);
        let det = a11 * a22 - a12 * a21;
        let bb = (b1 * a22 - a12 * b2) / det;
        let cc = (a11 * b2 - b1 * a21) / det;
        let exact = move |x: f64| (pi * x).sin() / (pi * pi) + bb * x + cc;

        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::unit_square(n);
            let acoef = ScalarField::constant(&g, 1.0);
            let mut sys = ScalarSystem::new(&g);
            sys.add_diffusion(&acoef);
            let lb = BoundaryField::constant(&g, l);
            let th = BoundaryField::constant(&g, 0.0);
            apply_robin_bc_on_sides(&mut sys, &lb, &th, 0.0, &[Side::West, Side::East]);
            sys.add_rhs(&ScalarField::from_fn(&g, |x, _| (pi * x).sin()));
            let u = sys.solve().unwrap();
            let mut emax = 0.0f64;
            for j in 0..=g.ny {
                for i in 0..=g.nx {
                    let (x, _) = g.node_xy(i, j);
                    emax = emax.max((u.at(i, j) - exact(x)).abs());
                }
            }
            errs.push(emax);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 1.9 && s2 > 1.9, "slopes {s1} {s2} from {errs:?}");
    }
}
