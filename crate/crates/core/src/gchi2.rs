//! Generalized chi-squared law `Q = Σ λᵢ χ²₁(δᵢ²) + c`.
//!
//! Under the GP posterior, `WRSS(g)` on the unique design rows is such a
//! quadratic form: with `z = D^{1/2}(g − ȳ) ~ N(D^{1/2}(μ − ȳ), D^{1/2} Σ D^{1/2})`
//! and `D^{1/2} Σ D^{1/2} = V Λ V'`, we get `‖z‖² = Σ λᵢ (uᵢ + vᵢ'a/√λᵢ)²`.
//!
//! The CDF is obtained from Imhof's inversion formula
//!
//! ```text
//! P(Q ≤ x) = 1/2 − (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du
//! θ(u) = ½ Σ [atan(λᵢu) + δᵢ² λᵢ u / (1 + λᵢ²u²)] − ½ (x − c) u
//! ρ(u) = Π (1 + λᵢ²u²)^{1/4} exp(½ Σ δᵢ² λᵢ² u² / (1 + λᵢ²u²))
//! ```
//!
//! integrated over half-periods of the asymptotic oscillation, with the
//! partial sums accelerated by Wynn's epsilon algorithm once the tail is
//! reached. Integration stops early when Imhof's truncation bound is below
//! tolerance.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::{CollapsedData, GpPosterior};
use crate::numerics::{diag_sqrt, find_root, sym_eigen, SymMatrix};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const WEIGHT_RTOL: f64 = 1e-10;
/// Negative eigenvalues within this fraction of the largest are clamped to 0.
pub const NEGATIVE_RTOL: f64 = 1e-9;

/// Absolute tolerance on the Imhof integral.
const INTEGRAL_TOL: f64 = 1e-9;
const MAX_CHUNKS: usize = 200_000;
const MIN_CHUNKS: usize = 8;
const WYNN_WINDOW: usize = 40;
const GK_MAX_DEPTH: u32 = 40;

/// Law of `Σ λᵢ χ²₁(δᵢ²) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormDist {
    weights: Vec<f64>,
    noncentralities: Vec<f64>,
    offset: f64,
}

impl QuadFormDist {
    pub fn new(weights: Vec<f64>, noncentralities: Vec<f64>, offset: f64) -> Result<Self> {
        if weights.len() != noncentralities.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: noncentralities.len(),
            });
        }
        if weights.iter().chain(&noncentralities).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("quadratic-form parameters"));
        }
        if let Some(d) = noncentralities.iter().find(|&&d| d < 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "noncentrality must be nonnegative, got {d}"
            )));
        }
        let wmax = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let mut weights = weights;
        for w in weights.iter_mut() {
            if *w < 0.0 {
                if *w < -NEGATIVE_RTOL * wmax {
                    return Err(Error::NotPositiveSemidefinite { value: *w });
                }
                log::warn!("clamping negative quadratic-form weight {w:e} to 0");
                *w = 0.0;
            }
        }
        Ok(Self {
            weights,
            noncentralities,
            offset,
        })
    }

    /// `Σ λᵢ χ²₁`.
    pub fn central(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(weights, alloc::vec![0.0; n], 0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noncentralities(&self) -> &[f64] {
        &self.noncentralities
    }

    /// Deterministic shift from directions with (numerically) zero variance.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn mean(&self) -> f64 {
        self.offset
            + self
                .weights
                .iter()
                .zip(&self.noncentralities)
                .map(|(l, d)| l * (1.0 + d))
                .sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noncentralities)
            .map(|(l, d)| 2.0 * l * l * (1.0 + 2.0 * d))
            .sum()
    }

    fn active(&self) -> (Vec<f64>, Vec<f64>) {
        self.weights
            .iter()
            .zip(&self.noncentralities)
            .filter(|(&l, _)| l > 0.0)
            .map(|(&l, &d)| (l, d))
            .unzip()
    }
}

/// Posterior law of `WRSS(g)`, for a posterior evaluated on `X*`.
pub fn quadform_law(post: &GpPosterior, c: &CollapsedData) -> Result<QuadFormDist> {
    let n = c.n_unique();
    if post.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: post.len(),
        });
    }
    if post.grid != c.unique_rows {
        return Err(Error::InvalidArgument(
            "posterior grid must equal the unique design rows, in order".into(),
        ));
    }
    let sqrt_d = diag_sqrt(&c.counts_f64());
    let s = SymMatrix::symmetrize(&post.cov.as_matrix().scale_rows_cols(&sqrt_d, &sqrt_d));
    let a: Vec<f64> = post
        .mean
        .iter()
        .zip(&c.group_means)
        .zip(&sqrt_d)
        .map(|((m, y), r)| r * (m - y))
        .collect();
    let eig = sym_eigen(&s)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let proj = eig.project(&a);

    let mut weights = Vec::with_capacity(n);
    let mut noncentralities = Vec::with_capacity(n);
    let mut offset = 0.0;
    for (&l, &p) in eig.values.iter().zip(&proj) {
        if l > WEIGHT_RTOL * lmax {
            weights.push(l);
            noncentralities.push(p * p / l);
        } else {
            if l < -NEGATIVE_RTOL * lmax {
                return Err(Error::NotPositiveSemidefinite { value: l });
            }
            if l < 0.0 {
                log::warn!("clamping negative posterior eigenvalue {l:e} to 0");
            }
            offset += p * p;
        }
    }
    QuadFormDist::new(weights, noncentralities, offset)
}

/// Normalized integrand parameters (weights scaled so the largest is 1).
struct Imhof {
    lambda: Vec<f64>,
    delta2: Vec<f64>,
    x: f64,
}

impl Imhof {
    fn integrand(&self, u: f64) -> f64 {
        if u < 1e-300 {
            let s: f64 = self
                .lambda
                .iter()
                .zip(&self.delta2)
                .map(|(l, d)| l * (1.0 + d))
                .sum();
            return 0.5 * (s - self.x);
        }
        let mut theta = -0.5 * self.x * u;
        let mut log_rho = 0.0;
        for (&l, &d) in self.lambda.iter().zip(&self.delta2) {
            let lu = l * u;
            let q = 1.0 + lu * lu;
            theta += 0.5 * (libm::atan(lu) + d * lu / q);
            log_rho += 0.25 * libm::log(q) + 0.5 * d * lu * lu / q;
        }
        libm::sin(theta) / (u * libm::exp(log_rho))
    }

    /// Imhof's bound on `∫_U^∞ |integrand|` in log form.
    fn log_truncation_bound(&self, u: f64) -> f64 {
        let k = 0.5 * self.lambda.len() as f64;
        let mut s = libm::log(PI * k) + k * libm::log(u);
        for (&l, &d) in self.lambda.iter().zip(&self.delta2) {
            let lu = l * u;
            s += 0.5 * libm::log(l) + 0.5 * d * lu * lu / (1.0 + lu * lu);
        }
        -s
    }

    fn integrate(&self) -> Result<f64> {
        let half_period = 2.0 * PI / self.x;
        let mut sums: Vec<f64> = Vec::with_capacity(WYNN_WINDOW);
        let mut total = 0.0;
        let mut prev_est = f64::NAN;
        let mut stable = 0;
        for j in 0..MAX_CHUNKS {
            let a = j as f64 * half_period;
            let b = a + half_period;
            total += gk_adaptive(&|u| self.integrand(u), a, b, INTEGRAL_TOL * 1e-2, 0)?;
            if self.log_truncation_bound(b) < libm::log(INTEGRAL_TOL * 1e-1) {
                return Ok(total);
            }
            if sums.len() == WYNN_WINDOW {
                sums.remove(0);
            }
            sums.push(total);
            if j + 1 < MIN_CHUNKS {
                continue;
            }
            let est = wynn_epsilon(&sums);
            if (est - prev_est).abs() < INTEGRAL_TOL {
                stable += 1;
                if stable >= 3 {
                    return Ok(est);
                }
            } else {
                stable = 0;
            }
            prev_est = est;
        }
        Err(Error::IntegrationFailure(alloc::format!(
            "no convergence after {MAX_CHUNKS} half-periods"
        )))
    }
}

/// `P(Q ≤ x)` by characteristic-function inversion.
pub fn cdf(d: &QuadFormDist, x: f64) -> Result<f64> {
    Ok(1.0 - sf(d, x)?)
}

/// `P(Q > x)`.
pub fn sf(d: &QuadFormDist, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("quadratic-form argument"));
    }
    let (lambda, delta2) = d.active();
    let shifted = x - d.offset;
    if lambda.is_empty() {
        return Ok(if shifted >= 0.0 { 0.0 } else { 1.0 });
    }
    if shifted <= 0.0 {
        return Ok(1.0);
    }
    let lmax = lambda.iter().fold(0.0f64, |m, &l| m.max(l));
    let imhof = Imhof {
        lambda: lambda.iter().map(|l| l / lmax).collect(),
        delta2,
        x: shifted / lmax,
    };
    let p = 0.5 + imhof.integrate()? / PI;
    Ok(p.clamp(0.0, 1.0))
}

/// Smallest `x` with `cdf(x) = p`, found by bisection on `[offset, mean + 12·sd]`.
pub fn quantile(d: &QuadFormDist, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "probability {p} outside (0, 1)"
        )));
    }
    let lo = d.offset;
    let sd = libm::sqrt(d.variance());
    if sd == 0.0 {
        return Ok(lo);
    }
    let mut hi = d.mean() + 12.0 * sd;
    while cdf(d, hi)? < p {
        hi = lo + 2.0 * (hi - lo);
    }
    // one tolerance serves both the probability gap and the bracket width,
    // so keep it absolute and small; bisection also stops at f64 resolution
    let tol = 1e-12;
    let mut failure = None;
    let x = find_root(
        |x| match cdf(d, x) {
            Ok(v) => v - p,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    x
}

/// Monte Carlo estimate of `P(Q ≤ x)` and its standard error.
pub fn cdf_mc(d: &QuadFormDist, x: f64, samples: usize, seed: u64) -> (f64, f64) {
    let samples = samples.max(1);
    let shifts: Vec<f64> = d.noncentralities.iter().map(|&n| libm::sqrt(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut q = d.offset;
        for (&l, &s) in d.weights.iter().zip(&shifts) {
            let z: f64 = StandardNormal.sample(&mut rng);
            q += l * (z + s) * (z + s);
        }
        if q <= x {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, libm::sqrt(p * (1.0 - p) / samples as f64))
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn gk_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (val, err) = gk15(f, a, b);
    if err <= tol || (b - a) <= f64::EPSILON * a.abs().max(1.0) {
        return Ok(val);
    }
    if depth >= GK_MAX_DEPTH {
        return Err(Error::IntegrationFailure(alloc::format!(
            "adaptive refinement cap reached on [{a}, {b}]"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(gk_adaptive(f, a, m, 0.5 * tol, depth + 1)? + gk_adaptive(f, m, b, 0.5 * tol, depth + 1)?)
}

/// Wynn's epsilon extrapolation of a sequence of partial sums; returns the
/// highest even-column entry.
fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return *s.last().unwrap_or(&0.0);
    }
    let mut prev: Vec<f64> = alloc::vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    let mut col = 0;
    while cur.len() > 1 {
        let next: Vec<f64> = (0..cur.len() - 1)
            .map(|i| {
                let diff = cur[i + 1] - cur[i];
                if diff == 0.0 {
                    f64::INFINITY
                } else {
                    prev[i + 1] + 1.0 / diff
                }
            })
            .collect();
        col += 1;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        if col % 2 == 0 {
            best = *next.last().expect("non-empty column");
        }
        prev = cur;
        cur = next;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Points;
    use alloc::vec;

    #[test]
    fn central_chi2_points() {
        let d = QuadFormDist::central(vec![1.0]).unwrap();
        assert!((cdf(&d, 3.8415).unwrap() - 0.95).abs() < 1e-4);
        let d = QuadFormDist::central(vec![1.0; 3]).unwrap();
        assert!((cdf(&d, 7.8147).unwrap() - 0.95).abs() < 1e-4);
    }

    #[test]
    fn quantile_table_points() {
        let d = QuadFormDist::central(vec![1.0]).unwrap();
        assert!((quantile(&d, 0.95).unwrap() - 3.8415).abs() < 1e-3);
        let d = QuadFormDist::central(vec![1.0; 15]).unwrap();
        assert!((quantile(&d, 0.95).unwrap() - 24.996).abs() < 1e-2);
    }

    #[test]
    fn exact_chi2_two_dof() {
        // 2·χ²₂/2 has P(Q ≤ x) = 1 − exp(−x/2)
        let d = QuadFormDist::central(vec![1.0, 1.0]).unwrap();
        for &x in &[0.05, 0.5, 2.0, 7.0, 20.0] {
            let exact = 1.0 - libm::exp(-0.5 * x);
            assert!((cdf(&d, x).unwrap() - exact).abs() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn degenerate_point_mass() {
        let d = QuadFormDist::new(vec![0.0], vec![0.0], 0.0).unwrap();
        assert_eq!(cdf(&d, 0.1).unwrap(), 1.0);
        assert_eq!(cdf(&d, -0.1).unwrap(), 0.0);
        assert_eq!(cdf_mc(&d, 0.1, 1000, 1), (1.0, 0.0));
    }

    #[test]
    fn offset_shifts_support() {
        let d = QuadFormDist::new(vec![1.0], vec![0.0], 2.0).unwrap();
        assert_eq!(cdf(&d, 1.9).unwrap(), 0.0);
        assert!((cdf(&d, 2.0 + 3.8415).unwrap() - 0.95).abs() < 1e-4);
    }

    #[test]
    fn negative_weights() {
        assert!(QuadFormDist::new(vec![1.0, -1e-12], vec![0.0, 0.0], 0.0).is_ok());
        assert!(matches!(
            QuadFormDist::new(vec![1.0, -1e-3], vec![0.0, 0.0], 0.0),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        assert!(QuadFormDist::new(vec![1.0], vec![-1.0], 0.0).is_err());
    }

    fn post(cov: &[f64], mean: &[f64]) -> (GpPosterior, CollapsedData) {
        let n = mean.len();
        let pts = Points::from_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        (
            GpPosterior {
                grid: pts.clone(),
                mean: mean.to_vec(),
                cov: SymMatrix::from_diag(cov),
                jitter: 0.0,
            },
            CollapsedData {
                unique_rows: pts,
                counts: vec![1; n],
                group_means: vec![0.0; n],
                within_ss: 0.0,
            },
        )
    }

    #[test]
    fn law_of_identity_posterior_is_central() {
        let (p, c) = post(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]);
        let d = quadform_law(&p, &c).unwrap();
        assert_eq!(d.weights(), &[1.0, 1.0, 1.0]);
        assert_eq!(d.noncentralities(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn law_of_diagonal_posterior_sorts_weights() {
        let (p, c) = post(&[2.0, 3.0], &[0.0, 0.0]);
        assert_eq!(quadform_law(&p, &c).unwrap().weights(), &[3.0, 2.0]);
    }

    #[test]
    fn law_with_counts_and_shift() {
        let (p, mut c) = post(&[1.0], &[1.0]);
        c.counts = vec![4];
        let d = quadform_law(&p, &c).unwrap();
        assert!((d.weights()[0] - 4.0).abs() < 1e-14);
        assert!((d.noncentralities()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_variance_direction_becomes_offset() {
        let (p, c) = post(&[1.0, 0.0], &[0.0, 3.0]);
        let d = quadform_law(&p, &c).unwrap();
        assert_eq!(d.weights(), &[1.0]);
        assert!((d.offset() - 9.0).abs() < 1e-14);
    }

    #[test]
    fn law_rejects_mismatched_grid() {
        let (p, mut c) = post(&[1.0, 1.0], &[0.0, 0.0]);
        c.unique_rows = Points::from_scalars(&[5.0, 6.0]);
        assert!(quadform_law(&p, &c).is_err());
        c.counts = vec![1];
        assert!(quadform_law(&p, &c).is_err());
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=20)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        assert!((wynn_epsilon(&sums) - core::f64::consts::LN_2).abs() < 1e-10);
    }
}
