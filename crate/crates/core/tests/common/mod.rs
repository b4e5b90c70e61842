#![allow(dead_code)]

use fbst_core::{Matrix, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `A A' + ridge·I` with a Gaussian `A`.
pub fn random_spd(rng: &mut impl Rng, n: usize, ridge: f64) -> SymMatrix {
    let a = normal_matrix(rng, n, n);
    let mut s = a.matmul(&a.transpose()).unwrap();
    s.add_diag(ridge);
    SymMatrix::symmetrize(&s)
}

/// Rank-`r` PSD matrix `A A'` with `A` of size `n × r`.
pub fn random_psd(rng: &mut impl Rng, n: usize, r: usize) -> SymMatrix {
    let a = normal_matrix(rng, n, r);
    SymMatrix::symmetrize(&a.matmul(&a.transpose()).unwrap())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Naive `L L'` factor with no pivoting or jitter, for cross-checks.
pub fn naive_cholesky(a: &SymMatrix) -> Matrix {
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                l[(i, i)] = (a[(i, i)] - s).sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    l
}
