use alloc::vec::Vec;

use super::matrix::{dot, Matrix, SymMatrix};
use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues are treated as zero by [`pinv`].
pub const PINV_RTOL: f64 = 1e-10;

/// Jitter added on the first retry, relative to `trace / dim`.
pub const JITTER_BASE: f64 = 1e-10;
/// Number of ×10 jitter escalations after the first failure.
pub const JITTER_ESCALATIONS: usize = 3;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Lower-triangular Cholesky factor `L` with `L·L' = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L·x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `L'·x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.l[(k, i)] * xk;
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        Ok(self.solve_upper(&self.solve_lower(b)))
    }

    pub fn solve_mat(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.rows(),
            });
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.col(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> SymMatrix {
        let inv = self
            .solve_mat(&Matrix::identity(self.dim()))
            .expect("identity has matching dimension");
        SymMatrix::symmetrize(&inv)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| libm::log(*d)).sum::<f64>()
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(a: &SymMatrix) -> Result<Cholesky> {
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = libm::sqrt(d);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(Cholesky { l })
}

/// Cholesky with the diagonal jitter retry policy: on failure add
/// `1e-10·trace/dim`, escalating ×10 at most three times. Returns the
/// factor and the jitter that was finally added (0 when none was needed).
pub fn cholesky_jittered(a: &SymMatrix) -> Result<(Cholesky, f64)> {
    let first_err = match cholesky(a) {
        Ok(c) => return Ok((c, 0.0)),
        Err(e) => e,
    };
    let n = a.dim().max(1);
    let scale = (a.as_matrix().trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = JITTER_BASE * scale;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut m = a.as_matrix().clone();
        m.add_diag(jitter);
        if let Ok(c) = cholesky(&SymMatrix::symmetrize(&m)) {
            log::debug!("cholesky succeeded after adding jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(first_err)
}

/// Solves `a·x = rhs` for symmetric positive definite `a`.
pub fn solve_spd(a: &SymMatrix, rhs: &Matrix) -> Result<Matrix> {
    cholesky(a)?.solve_mat(rhs)
}

pub fn solve_spd_vec(a: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    cholesky(a)?.solve_vec(rhs)
}

/// Eigendecomposition `A = V·Λ·V'` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: Matrix,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.col(k)
    }

    /// `V·f(Λ)·V'`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, f) in fl.iter().enumerate() {
                    s += self.vectors[(i, k)] * f * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix::symmetrize(&out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    /// Coordinates of `v` in the eigenbasis, `V'·v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.vectors
            .tr_matvec(v)
            .expect("vector length must match decomposition dimension")
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomp> {
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 || n <= 1 {
        return Ok(sorted(m.diag(), v));
    }
    let target = (f64::EPSILON * scale) * (f64::EPSILON * scale);

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off <= target {
            return Ok(sorted(m.diag(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // after a few sweeps, entries negligible next to both pivots are dropped
                if sweep > 3
                    && apq.abs() * 1e18 < app.abs()
                    && apq.abs() * 1e18 < aqq.abs()
                {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (theta.abs() + libm::hypot(theta, 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    m[(k, p)] = np;
                    m[(p, k)] = np;
                    m[(k, q)] = nq;
                    m[(q, k)] = nq;
                }
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

fn sorted(values: Vec<f64>, vectors: Matrix) -> EigenDecomp {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let vals = order.iter().map(|&i| values[i]).collect();
    let vecs = Matrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    EigenDecomp {
        values: vals,
        vectors: vecs,
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
/// `|λ| ≤ rtol·max|λ|` are discarded.
pub fn pinv(a: &SymMatrix, rtol: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let lmax = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let cut = rtol * lmax;
    Ok(eig.reconstruct_with(|l| if l.abs() > cut && l != 0.0 { 1.0 / l } else { 0.0 }))
}

/// Symmetric square root `V·√max(Λ,0)·V'` factor returned as `V·√max(Λ,0)`
/// (a matrix `R` with `R·R' = A` for PSD `A`).
pub fn psd_sqrt_factor(eig: &EigenDecomp) -> Matrix {
    let n = eig.dim();
    let roots: Vec<f64> = eig.values.iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
    Matrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * roots[j])
}

/// Inverse of a small SPD matrix (Gram matrices of the basis).
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(cholesky(a)?.inverse())
}

pub(crate) fn diag_sqrt(d: &[f64]) -> Vec<f64> {
    d.iter().map(|&x| libm::sqrt(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    /// Deterministic pseudo-random SPD matrix `G·G' + n·I`.
    fn test_spd(n: usize, seed: u64) -> SymMatrix {
        let g = lcg_matrix(n, n, seed);
        let mut m = g.matmul(&g.transpose()).unwrap();
        m.add_diag(n as f64);
        SymMatrix::symmetrize(&m)
    }

    fn lcg_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(r, c, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn cholesky_identity() {
        let c = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(c.factor(), &Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let c = cholesky(&sym(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let l = c.factor();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - core::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        // eigenvalues 3 and -1
        let a = sym(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { .. })));
        assert!(cholesky_jittered(&a).is_err());
    }

    #[test]
    fn jitter_rescues_singular_kernel() {
        let a = sym(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(cholesky(&a).is_err());
        let (_, jitter) = cholesky_jittered(&a).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-7);
    }

    #[test]
    fn solve_spd_cases() {
        let b = Matrix::column(&[3.0, -1.0, 2.0]);
        assert_eq!(solve_spd(&SymMatrix::identity(3), &b).unwrap(), b);
        let x = solve_spd_vec(&SymMatrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);

        let a = test_spd(5, 7);
        let rhs: Vec<f64> = lcg_matrix(5, 1, 11).col(0);
        let x = solve_spd_vec(&a, &rhs).unwrap();
        let r = a.as_matrix().matvec(&x).unwrap();
        let resid: f64 = r.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(resid < 1e-8 * rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn eigen_diagonal_and_identity() {
        let e = sym_eigen(&SymMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vector(0).iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![0.0, 1.0]);
        let e = sym_eigen(&SymMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let g = lcg_matrix(6, 6, 3);
        let a = SymMatrix::symmetrize(&g.add(&g.transpose()).unwrap());
        let e = sym_eigen(&a).unwrap();
        let rec = e.reconstruct();
        let err = rec.as_matrix().sub(a.as_matrix()).unwrap().frobenius_norm();
        assert!(err <= 1e-9 * a.as_matrix().frobenius_norm());
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pinv_cases() {
        let p = pinv(&SymMatrix::from_diag(&[2.0, 0.0]), PINV_RTOL).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && p[(1, 1)].abs() < 1e-15);
        let p = pinv(&SymMatrix::identity(3), PINV_RTOL).unwrap();
        assert!(p.as_matrix().sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-14);

        // v = (2, 0) rotated: ‖v‖ = 2, (vv')⁺ = vv'/‖v‖⁴
        let v = [core::f64::consts::SQRT_2, core::f64::consts::SQRT_2];
        let vv = SymMatrix::symmetrize(&Matrix::from_fn(2, 2, |i, j| v[i] * v[j]));
        let p = pinv(&vv, PINV_RTOL).unwrap();
        let expect = vv.as_matrix().scale(1.0 / 16.0);
        assert!(p.as_matrix().sub(&expect).unwrap().max_abs() < 1e-12);
        let apa = vv.as_matrix().matmul(p.as_matrix()).unwrap().matmul(vv.as_matrix()).unwrap();
        assert!(apa.sub(vv.as_matrix()).unwrap().max_abs() < 1e-8);
    }
}
