mod common;

use common::*;
use fbst_core::gchi2::{cdf, cdf_mc, quadform_law, quantile, sf};
use fbst_core::gp::collapse;
use fbst_core::{GpPosterior, Points, QuadFormDist};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_law(seed: u64, dim: usize, noncentral: bool) -> QuadFormDist {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..dim).map(|_| r.random_range(0.05..3.0)).collect();
    let d: Vec<f64> = (0..dim)
        .map(|_| if noncentral { r.random_range(0.0..4.0) } else { 0.0 })
        .collect();
    QuadFormDist::new(w, d, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cdf_is_monotone(seed in any::<u64>(), dim in 1usize..8, nc in any::<bool>()) {
        let d = random_law(seed, dim, nc);
        let sd = d.variance().sqrt();
        let mut prev = 0.0;
        for i in 0..40 {
            let x = d.mean() + (i as f64 / 8.0 - 2.0) * sd;
            let p = cdf(&d, x).unwrap();
            prop_assert!(p >= prev - 1e-9, "cdf decreased at {}: {} < {}", x, p, prev);
            prev = p;
        }
    }

    #[test]
    fn quantile_inverts_cdf(seed in any::<u64>(), dim in 1usize..8, nc in any::<bool>(), p in 0.01f64..0.99) {
        let d = random_law(seed, dim, nc);
        let x = quantile(&d, p).unwrap();
        prop_assert!((cdf(&d, x).unwrap() - p).abs() < 1e-6);
    }

    #[test]
    fn cdf_is_scale_invariant(seed in any::<u64>(), dim in 1usize..8, c in 0.01f64..100.0) {
        let d = random_law(seed, dim, true);
        let scaled = QuadFormDist::new(
            d.weights().iter().map(|w| w * c).collect(),
            d.noncentralities().to_vec(),
            0.0,
        ).unwrap();
        let x = d.mean();
        prop_assert!((cdf(&d, x).unwrap() - cdf(&scaled, c * x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn cdf_and_sf_are_complementary(seed in any::<u64>(), dim in 1usize..6) {
        let d = random_law(seed, dim, true);
        let x = d.mean() * 0.8;
        prop_assert!((cdf(&d, x).unwrap() + sf(&d, x).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cdf_agrees_with_monte_carlo() {
    for seed in 0..10 {
        let d = random_law(seed, 1 + seed as usize % 6, seed % 2 == 0);
        for q in [0.3, 1.0, 1.7] {
            let x = q * d.mean();
            let exact = cdf(&d, x).unwrap();
            let (p, se) = cdf_mc(&d, x, 200_000, seed + 100);
            assert!((exact - p).abs() <= 4.0 * se.max(1e-4), "seed {seed}: {exact} vs {p} ± {se}");
        }
    }
}

/// The law of WRSS(g) under a posterior checked against direct simulation
/// of g, without going through the eigen reduction.
#[test]
fn law_of_wrss_matches_direct_simulation() {
    let mut r = rng(5);
    let xs = [0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0];
    let ys = normal_vec(&mut r, xs.len());
    let c = collapse(&Points::from_scalars(&xs), &ys).unwrap();
    let n = c.n_unique();
    let cov = random_spd(&mut r, n, 0.1);
    let mean = normal_vec(&mut r, n);
    let post = GpPosterior { grid: c.unique_rows.clone(), mean: mean.clone(), cov: cov.clone(), jitter: 0.0 };
    let law = quadform_law(&post, &c).unwrap();

    let l = naive_cholesky(&cov);
    let counts = c.counts_f64();
    let samples = 200_000;
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let g: Vec<f64> = (0..n).map(|i| mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>()).collect();
        draws.push((0..n).map(|i| counts[i] * (g[i] - c.group_means[i]).powi(2)).sum::<f64>());
    }
    let m = draws.iter().sum::<f64>() / samples as f64;
    assert!((m - law.mean()).abs() < 0.02 * law.mean(), "{m} vs {}", law.mean());
    for q in [0.5, 1.0, 2.0] {
        let x = q * law.mean();
        let p = draws.iter().filter(|&&v| v <= x).count() as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        let exact = cdf(&law, x).unwrap();
        assert!((exact - p).abs() <= 4.0 * se.max(1e-4), "{exact} vs {p}");
    }
}
