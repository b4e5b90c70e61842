mod common;

use common::*;
use fbst_core::gp::{collapse, draw_paths, posterior, wrss};
use fbst_core::{GpPosterior, GpPrior, Kernel, KernelKind, MeanFn, Points, SymMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A single-point grid must reproduce the scalar conjugate update
    /// computed from the textbook formulas in a different order.
    #[test]
    fn single_point_grid_is_scalar_update(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.7).collect();
        let ys = normal_vec(&mut r, n);
        let x_new = 0.35;
        let prior = GpPrior::new(Kernel::new(KernelKind::SquaredExponential, 1.3, 2.0).unwrap(), 0.2)
            .unwrap()
            .with_mean(MeanFn::Constant(0.5));
        let post = posterior(&prior, &Points::from_scalars(&xs), &ys, &Points::from_scalars(&[x_new])).unwrap();

        // oracle: (K + σ²I)⁻¹ via the naive factor
        let k = |a: f64, b: f64| 2.0 * (-(a - b) * (a - b) / (2.0 * 1.3 * 1.3)).exp();
        let kxx = SymMatrix::symmetrize(&fbst_core::Matrix::from_fn(n, n, |i, j| {
            k(xs[i], xs[j]) + if i == j { 0.2 } else { 0.0 }
        }));
        let l = naive_cholesky(&kxx);
        let solve = |b: &[f64]| -> Vec<f64> {
            let mut z = b.to_vec();
            for i in 0..n {
                for j in 0..i { z[i] -= l[(i, j)] * z[j]; }
                z[i] /= l[(i, i)];
            }
            for i in (0..n).rev() {
                for j in i + 1..n { z[i] -= l[(j, i)] * z[j]; }
                z[i] /= l[(i, i)];
            }
            z
        };
        let kstar: Vec<f64> = xs.iter().map(|&x| k(x, x_new)).collect();
        let resid: Vec<f64> = ys.iter().map(|y| y - 0.5).collect();
        let a = solve(&resid);
        let mean = 0.5 + kstar.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
        let b = solve(&kstar);
        let var = 2.0 - kstar.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
        prop_assert!((post.mean[0] - mean).abs() < 1e-10);
        prop_assert!((post.cov[(0, 0)] - var).abs() < 1e-10);
    }

    /// Σ(yᵢ − h(xᵢ))² = WRSS(h) + within_ss, with h given on the unique rows.
    #[test]
    fn collapsed_and_full_residuals_agree(seed in any::<u64>(), n in 1usize..30, levels in 1usize..6) {
        let mut r = rng(seed);
        let xs: Vec<f64> = (0..n).map(|i| ((i * 7 + seed as usize) % levels) as f64).collect();
        let ys = normal_vec(&mut r, n);
        let c = collapse(&Points::from_scalars(&xs), &ys).unwrap();
        let h = normal_vec(&mut r, c.n_unique());
        let full: f64 = xs.iter().zip(&ys).map(|(x, y)| {
            let j = c.unique_rows.position(&[*x]).unwrap();
            (y - h[j]) * (y - h[j])
        }).sum();
        let lhs = wrss(&h, &c).unwrap() + c.within_ss;
        prop_assert!((full - lhs).abs() < 1e-10 * full.max(1.0));
        prop_assert_eq!(c.n_total(), n);
    }

    #[test]
    fn posterior_covariance_is_psd_and_contracts(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = normal_vec(&mut r, n).iter().map(|e| 6.0 + e).collect();
        let grid = Points::regular_grid(0.0, 7.0, 0.5).unwrap();
        let prior = GpPrior::droplet();
        let post = posterior(&prior, &Points::from_scalars(&xs), &ys, &grid).unwrap();
        post.check_psd().unwrap();
        let pri = GpPosterior::prior_on(&prior, &grid);
        for i in 0..grid.len() {
            prop_assert!(post.cov[(i, i)] <= pri.cov[(i, i)] + 1e-12);
        }
    }
}

#[test]
fn draws_match_moments() {
    let post = GpPosterior {
        grid: Points::from_scalars(&[0.0]),
        mean: vec![2.0],
        cov: SymMatrix::from_diag(&[9.0]),
        jitter: 0.0,
    };
    let d = draw_paths(&post, 100_000, 17).unwrap();
    let xs = d.col(0);
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((m - 2.0).abs() < 0.03, "mean {m}");
    assert!((v - 9.0).abs() < 0.15, "variance {v}");
}

#[test]
fn draws_are_seed_deterministic() {
    let grid = Points::regular_grid(0.0, 7.0, 0.5).unwrap();
    let post = GpPosterior::prior_on(&GpPrior::droplet(), &grid);
    assert_eq!(draw_paths(&post, 5, 3).unwrap(), draw_paths(&post, 5, 3).unwrap());
    assert_ne!(draw_paths(&post, 5, 3).unwrap(), draw_paths(&post, 5, 4).unwrap());
}
