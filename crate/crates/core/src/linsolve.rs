//! Direct solver for the assembled sparse non-symmetric systems.
//!
//! The operators come from a structured mesh, so a row-pivoted banded LU
//! factorisation is used: deterministic, reusable across right-hand sides,
//! and with a verifiable residual contract. A separate dense Gaussian
//! elimination with partial pivoting serves as the independent oracle for
//! small systems.

use serde::Serialize;

use crate::assembly::{CsrMatrix, SparseSystem};
use crate::error::{Error, Result};

/// Default relative-residual tolerance: two orders below the loosest test
/// tolerance in the crate.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: Vec<f64>,
    pub relative_residual: f64,
    /// Iterative-refinement steps taken after the direct solve.
    pub iterations: usize,
    pub method: &'static str,
}

/// Banded LU factorisation with row partial pivoting. Immutable after
/// construction and reusable across right-hand sides.
pub struct Factorization {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    matrix: CsrMatrix,
}

impl Factorization {
    pub fn new(matrix: &CsrMatrix) -> Result<Self> {
        let n = matrix.n;
        if n == 0 {
            return Err(Error::Assembly("empty system".into()));
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for k in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                let j = matrix.col_idx[k];
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        for i in 0..n {
            for k in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                let j = matrix.col_idx[k];
                ab[j * ldab + (kl + ku + i - j)] = matrix.values[k];
            }
        }
        let mut ipiv = vec![0usize; n];
        // Exact-zero pivots flag singularity; near-singularity is caught by
        // the residual contract instead of a pivot threshold.
        let pivot_floor = 0.0;

        // Unblocked banded LU with partial pivoting (standard gbtrf scheme).
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0usize;
            let mut best = ab[j * ldab + kl + ku].abs();
            for q in 1..=km {
                let cand = ab[j * ldab + kl + ku + q].abs();
                if cand > best {
                    best = cand;
                    p = q;
                }
            }
            if best <= pivot_floor {
                return Err(Error::Singular {
                    pivot: best,
                    column: j,
                });
            }
            ipiv[j] = j + p;
            let col_hi = (j + kl + ku).min(n - 1);
            if p != 0 {
                for col in j..=col_hi {
                    let ra = col * ldab + (kl + ku + j - col);
                    let rb = col * ldab + (kl + ku + j + p - col);
                    ab.swap(ra, rb);
                }
            }
            let piv = ab[j * ldab + kl + ku];
            for i in 1..=km {
                let idx = j * ldab + kl + ku + i;
                ab[idx] /= piv;
            }
            for col in (j + 1)..=col_hi {
                let ujc = ab[col * ldab + (kl + ku + j - col)];
                if ujc != 0.0 {
                    for i in 1..=km {
                        let m = ab[j * ldab + kl + ku + i];
                        ab[col * ldab + (kl + ku + j + i - col)] -= m * ujc;
                    }
                }
            }
        }

        Ok(Factorization {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
            matrix: matrix.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One direct solve; no residual check.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let mut x = b.to_vec();
        for j in 0..self.n {
            let pj = self.ipiv[j];
            if pj != j {
                x.swap(j, pj);
            }
            let km = kl.min(self.n - 1 - j);
            for i in 1..=km {
                x[j + i] -= self.ab[j * ldab + kl + ku + i] * x[j];
            }
        }
        for j in (0..self.n).rev() {
            x[j] /= self.ab[j * ldab + kl + ku];
            let lo = j.saturating_sub(kl + ku);
            for i in lo..j {
                x[i] -= self.ab[j * ldab + (kl + ku + i - j)] * x[j];
            }
        }
        x
    }

    /// Solve with the residual contract: direct solve plus iterative
    /// refinement until the relative residual meets `tol` or `max_iter`
    /// refinement steps are exhausted.
    pub fn solve_checked(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
        if !(tol > 0.0 && tol <= 1e-6) {
            return Err(Error::Assembly(format!(
                "solver tolerance must lie in (0, 1e-6] (got {tol})"
            )));
        }
        let norm_b = norm2(b);
        if norm_b == 0.0 {
            return Ok(SolveReport {
                solution: vec![0.0; self.n],
                relative_residual: 0.0,
                iterations: 0,
                method: "banded_lu",
            });
        }
        let mut x = self.solve(b);
        let mut residual = self.relative_residual(&x, b, norm_b);
        let mut iterations = 0;
        while residual > tol && iterations < max_iter {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            iterations += 1;
            residual = self.relative_residual(&x, b, norm_b);
        }
        if residual > tol {
            return Err(Error::SolveResidual {
                residual,
                iterations,
                tol,
            });
        }
        Ok(SolveReport {
            solution: x,
            relative_residual: residual,
            iterations,
            method: "banded_lu",
        })
    }

    fn relative_residual(&self, x: &[f64], b: &[f64], norm_b: f64) -> f64 {
        let ax = self.matrix.matvec(x);
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += (ax[i] - b[i]).powi(2);
        }
        acc.sqrt() / norm_b
    }
}

/// Factor-and-solve entry point for a full system.
pub fn solve(sys: &SparseSystem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let factor = Factorization::new(&sys.matrix)?;
    factor.solve_checked(&sys.load, tol, max_iter)
}

/// Dense Gaussian elimination with partial pivoting; the small-system
/// oracle. Matrices larger than 64x64 are refused.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if n > 64 {
        return Err(Error::Assembly(format!(
            "dense oracle limited to 64x64 (got {n})"
        )));
    }
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::Assembly("dense matrix shape mismatch".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for j in 0..n {
        let mut p = j;
        let mut best = m[j][j].abs();
        for i in (j + 1)..n {
            if m[i][j].abs() > best {
                best = m[i][j].abs();
                p = i;
            }
        }
        if best <= 1e-12 {
            return Err(Error::Singular {
                pivot: best,
                column: j,
            });
        }
        if p != j {
            m.swap(j, p);
            x.swap(j, p);
        }
        for i in (j + 1)..n {
            let factor = m[i][j] / m[j][j];
            if factor != 0.0 {
                for k in j..n {
                    m[i][k] -= factor * m[j][k];
                }
                x[i] -= factor * x[j];
            }
        }
    }
    for j in (0..n).rev() {
        let mut acc = x[j];
        for k in (j + 1)..n {
            acc -= m[j][k] * x[k];
        }
        x[j] = acc / m[j][j];
    }
    Ok(x)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_operator, DiscreteSpace};
    use crate::coefficients::{MatrixField, RotationField};
    use crate::mesh::build_rectangle_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn assembled(nx: usize, ny: usize, k2: f64) -> SparseSystem {
        let space = DiscreteSpace::new(Arc::new(build_rectangle_mesh(nx, ny, 1.0, 1.0).unwrap()));
        assemble_operator(
            &space,
            &MatrixField::isotropic(1.0),
            &RotationField::constant(1.0, k2),
            0.5,
        )
    }

    #[test]
    fn identity_and_diagonal() {
        let eye = CsrMatrix::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let f = Factorization::new(&eye).unwrap();
        let r = f.solve_checked(&[3.0, -1.0, 2.5], 1e-12, 2).unwrap();
        assert_eq!(r.solution, vec![3.0, -1.0, 2.5]);
        assert_eq!(r.relative_residual, 0.0);

        let d = CsrMatrix::from_triplets(2, vec![(0, 0, 2.0), (1, 1, 4.0)]);
        let f = Factorization::new(&d).unwrap();
        let r = f.solve_checked(&[2.0, 8.0], 1e-12, 2).unwrap();
        assert!((r.solution[0] - 1.0).abs() < 1e-15);
        assert!((r.solution[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_oracle_on_assembled_operator() {
        let mut sys = assembled(2, 2, 0.4); // 18 dofs
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        sys.load = (0..sys.ndofs).map(|_| rng.random::<f64>() - 0.5).collect();
        let report = solve(&sys, 1e-10, 3).unwrap();
        let dense = dense_solve(&sys.matrix.to_dense(), &sys.load).unwrap();
        for (a, b) in report.solution.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
        assert!(report.relative_residual <= 1e-10);
    }

    #[test]
    fn hilbert_conditioning_smoke() {
        let n = 4;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| 1.0 / ((i + j + 1) as f64)).collect())
            .collect();
        let b = vec![1.0; n];
        let x = dense_solve(&a, &b).unwrap();
        // multiply back
        let mut res = 0.0_f64;
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i][j] * x[j]).sum();
            res += (ax - b[i]).powi(2);
        }
        assert!(res.sqrt() / 2.0 <= 1e-8);
    }

    #[test]
    fn adjoint_duality_through_transpose_solve() {
        let sys = assembled(3, 3, 0.7);
        let tmat = sys.matrix.transpose();
        let f = Factorization::new(&sys.matrix).unwrap();
        let ft = Factorization::new(&tmat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let b: Vec<f64> = (0..sys.ndofs).map(|_| rng.random::<f64>() - 0.5).collect();
            let c: Vec<f64> = (0..sys.ndofs).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = f.solve_checked(&b, 1e-12, 3).unwrap().solution;
            let y = ft.solve_checked(&c, 1e-12, 3).unwrap().solution;
            let lhs: f64 = x.iter().zip(&c).map(|(a, b)| a * b).sum();
            let rhs: f64 = b.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let z = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        match Factorization::new(&z) {
            Err(Error::Singular { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected singular error, got {other:?}", other = other.err()),
        }
    }

    #[test]
    fn tolerance_contract() {
        let sys = assembled(1, 1, 0.0);
        assert!(solve(&sys, 1e-3, 2).is_err());
        assert!(solve(&sys, 0.0, 2).is_err());
    }

    #[test]
    fn zero_rhs_gives_exact_zero() {
        let sys = assembled(4, 4, 0.3);
        let r = solve(&sys, 1e-10, 2).unwrap();
        assert!(r.solution.iter().all(|v| *v == 0.0));
    }
}
