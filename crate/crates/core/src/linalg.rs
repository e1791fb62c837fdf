//! Banded LU factorization with partial pivoting, plus a bordered variant
//! for systems with one scalar constraint (used by the flow subproblem to
//! pin the mean of the density perturbation).
//!
//! Storage follows the LAPACK general-band convention: entry `(i, j)` of an
//! `n x n` matrix with `kl` sub- and `ku` superdiagonals lives at
//! `ab[kl + ku + i - j + j * ldab]` with `ldab = 2 * kl + ku + 1`. The extra
//! `kl` rows on top hold fill-in produced by row pivoting.

use thiserror::Error;

/// Errors from the direct solvers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// A zero (or non-finite) pivot was encountered at the given column.
    #[error("singular linear system: zero pivot at column {0}")]
    SingularPivot(usize),
    /// The bordered Schur complement vanished; the constraint is degenerate.
    #[error("bordered system has a degenerate constraint")]
    DegenerateBorder,
}

/// General band matrix in LAPACK band storage, column major.
#[derive(Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0);
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            i + self.ku >= j && j + self.kl >= i,
            "entry ({i},{j}) outside band"
        );
        self.kl + self.ku + i - j + j * self.ldab
    }

    /// Adds `v` to entry `(i, j)`. Panics in debug builds if outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.ab[o] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.ab[o] = v;
    }

    /// Zeroes an entire row within the band (used to rewrite boundary rows).
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let o = self.offset(i, j);
            self.ab[o] = 0.0;
        }
    }

    /// y = A x (used by tests and by iterative refinement diagnostics).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let ilo = j.saturating_sub(self.ku);
            let ihi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let base = self.kl + self.ku + j * self.ldab;
            for i in ilo..=ihi {
                y[i] += self.ab[base + i - j] * xj;
            }
        }
    }

    /// Factorizes in place; consumes the matrix.
    pub fn factor(mut self) -> Result<BandLu, LinalgError> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku; // effective upper bandwidth after pivoting
        let mut ipiv = vec![0usize; n];
        let ab = &mut self.ab;

        for j in 0..n {
            // Pivot search in column j among rows j..=j+kl.
            let km = kl.min(n - 1 - j);
            let col = j * ldab + kv; // index of (j, j)
            let mut p = 0usize;
            let mut pmax = ab[col].abs();
            for t in 1..=km {
                let v = ab[col + t].abs();
                if v > pmax {
                    pmax = v;
                    p = t;
                }
            }
            ipiv[j] = j + p;
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(LinalgError::SingularPivot(j));
            }
            // Swap rows j and j+p across columns j..=min(n-1, j+kv).
            if p != 0 {
                let jhi = (j + kv).min(n - 1);
                for jj in j..=jhi {
                    let base = jj * ldab + kv + j - jj;
                    ab.swap(base, base + p);
                }
            }
            // Multipliers.
            let piv = ab[col];
            for t in 1..=km {
                ab[col + t] /= piv;
            }
            // Trailing update.
            let jhi = (j + kv).min(n - 1);
            for jj in (j + 1)..=jhi {
                let base = jj * ldab + kv + j - jj; // (j, jj)
                let f = ab[base];
                if f != 0.0 {
                    for t in 1..=km {
                        ab[base + t] -= ab[col + t] * f;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            ldab,
            ab: self.ab,
            ipiv,
        })
    }
}

/// LU factors of a band matrix.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        // Forward: apply permutation and L.
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = kl.min(n - 1 - j);
                let col = j * ldab + kv;
                for t in 1..=km {
                    b[j + t] -= self.ab[col + t] * bj;
                }
            }
        }
        // Backward: U x = y.
        for j in (0..n).rev() {
            let col = j * ldab + kv;
            let xj = b[j] / self.ab[col];
            b[j] = xj;
            if xj != 0.0 {
                let ilo = j.saturating_sub(kv);
                for i in ilo..j {
                    b[i] -= self.ab[col - (j - i)] * xj;
                }
            }
        }
    }
}

/// One-constraint bordered solver: solves
///
/// ```text
/// [ A  c ] [x ]   [b    ]
/// [ d' 0 ] [mu] = [beta ]
/// ```
///
/// via block elimination on a factorization of `A`. `A` may be numerically
/// near-singular with `c`/`d` completing the rank (the flow system's
/// constant-density mode).
pub struct BorderedLu {
    lu: BandLu,
    a_inv_c: Vec<f64>,
    d: Vec<f64>,
    schur: f64,
}

impl BorderedLu {
    pub fn new(a: BandMatrix, c: &[f64], d: Vec<f64>) -> Result<Self, LinalgError> {
        assert_eq!(c.len(), a.n());
        assert_eq!(d.len(), a.n());
        let lu = a.factor()?;
        let mut a_inv_c = c.to_vec();
        lu.solve_in_place(&mut a_inv_c);
        let schur: f64 = dot(&d, &a_inv_c);
        if schur == 0.0 || !schur.is_finite() {
            return Err(LinalgError::DegenerateBorder);
        }
        Ok(BorderedLu {
            lu,
            a_inv_c,
            d,
            schur,
        })
    }

    /// Solves the bordered system; returns the multiplier.
    pub fn solve_in_place(&self, b: &mut [f64], beta: f64) -> f64 {
        self.lu.solve_in_place(b);
        let mu = (dot(&self.d, b) - beta) / self.schur;
        for (xi, ci) in b.iter_mut().zip(&self.a_inv_c) {
            *xi -= mu * ci;
        }
        mu
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Dense LU with partial pivoting; reference implementation for tests only.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            let piv = a[k][k];
            assert!(piv.abs() > 0.0);
            for i in (k + 1)..n {
                let f = a[i][k] / piv;
                a[i][k] = 0.0;
                for j in (k + 1)..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in (k + 1)..n {
                s -= a[k][j] * b[j];
            }
            b[k] = s / a[k][k];
        }
        b
    }

    #[test]
    fn band_matches_dense_on_random_systems() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[
            (1usize, 0usize, 0usize),
            (5, 1, 2),
            (12, 3, 1),
            (40, 5, 5),
            (33, 2, 7),
        ] {
            let mut band = BandMatrix::new(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i + ku >= j && j + kl >= i {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        let v = if i == j { v + 4.0 } else { v };
                        band.set(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xref = dense_solve(dense, b.clone());
            let lu = band.factor().unwrap();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            for (xi, ri) in x.iter().zip(&xref) {
                assert!(
                    (xi - ri).abs() < 1e-10,
                    "band vs dense mismatch: {xi} vs {ri}"
                );
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [0 1; 1 0] requires a row swap.
        let mut m = BandMatrix::new(2, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        let lu = m.factor().unwrap();
        let mut b = vec![2.0, 3.0];
        lu.solve_in_place(&mut b);
        assert!((b[0] - 3.0).abs() < 1e-14);
        assert!((b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = BandMatrix::new(3, 1, 1);
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
        // row/col 2 left zero
        assert!(matches!(m.factor(), Err(LinalgError::SingularPivot(_))));
    }

    #[test]
    fn matvec_consistent_with_factorization() {
        let mut rng = StdRng::seed_from_u64(3);
        let (n, kl, ku) = (25usize, 4usize, 3usize);
        let mut m = BandMatrix::new(n, kl, ku);
        for i in 0..n {
            for j in 0..n {
                if i + ku >= j && j + kl >= i {
                    m.set(
                        i,
                        j,
                        if i == j {
                            5.0
                        } else {
                            rng.random_range(-1.0..1.0)
                        },
                    );
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        m.matvec(&x, &mut b);
        let lu = m.clone().factor().unwrap();
        let mut got = b;
        lu.solve_in_place(&mut got);
        for (g, xi) in got.iter().zip(&x) {
            assert!((g - xi).abs() < 1e-11);
        }
    }

    #[test]
    fn bordered_pins_singular_direction() {
        // A = 1-D Neumann Laplacian (singular: constants), constraint = zero
        // mean. A tiny diagonal shift makes the factorization well defined;
        // the shift error is what the solvers' outer defect iteration removes.
        let n = 16;
        let shift = 1e-9;
        let mut a = BandMatrix::new(n, 1, 1);
        for i in 0..n {
            let (l, r) = (i > 0, i + 1 < n);
            let diag = (l as i32 + r as i32) as f64;
            a.set(i, i, diag + shift);
            if l {
                a.add(i, i - 1, -1.0);
            }
            if r {
                a.add(i, i + 1, -1.0);
            }
        }
        let unshifted = {
            let mut m = a.clone();
            for i in 0..n {
                m.add(i, i, -shift);
            }
            m
        };
        let ones = vec![1.0; n];
        // Compatible RHS with zero sum.
        let rhs: Vec<f64> = (0..n)
            .map(|i| (i as f64) - (n as f64 - 1.0) / 2.0)
            .collect();
        let bordered = BorderedLu::new(a, &ones, ones.clone()).unwrap();
        let mut x = rhs.clone();
        let mu = bordered.solve_in_place(&mut x, 0.0);
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-9, "mean = {mean}");
        assert!(mu.abs() < 1e-6, "mu = {mu}");
        // True residual of the unshifted operator stays at the shift level.
        let mut ax = vec![0.0; n];
        unshifted.matvec(&x, &mut ax);
        for (axi, bi) in ax.iter().zip(&rhs) {
            assert!((axi - bi).abs() < 1e-6, "residual {}", axi - bi);
        }
    }
}
