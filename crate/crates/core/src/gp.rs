//! Gaussian process prior and conjugate posterior on finite grids.
//!
//! With `y = g(x) + e`, `e ~ N(0, σ²)` and `g ~ GP(m, K)`, the posterior on a
//! grid `X'` is normal with
//!
//! ```text
//! μ(X')      = m(X') + K(X, X')' (K(X, X) + σ² I)⁻¹ (y − m(X))
//! Σ(X', X')  = K(X', X') − K(X, X')' (K(X, X) + σ² I)⁻¹ K(X, X')
//! ```
//!
//! Because the likelihood only touches `g` on the observed rows, the
//! posterior density of a path `h` relative to the prior depends on `h` only
//! through the weighted residual sum of squares on the unique rows `X*`
//! (see [`collapse`] and [`wrss`]).

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky_jittered, psd_sqrt_factor, sym_eigen, Matrix, SymMatrix,
};

/// A list of covariate points, each a row of `dim` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    /// Row-major point data; `data.len()` must be a multiple of `dim`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate points"));
        }
        Ok(Self { dim, data })
    }

    /// One-dimensional points.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    /// Evenly spaced one-dimensional grid `start, start+step, …` up to `stop`
    /// (inclusive, with a half-step guard against rounding).
    pub fn regular_grid(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || stop < start {
            return Err(Error::InvalidArgument(alloc::format!(
                "bad grid {start}:{stop}:{step}"
            )));
        }
        let n = libm::floor((stop - start) / step + 0.5) as usize + 1;
        Ok(Self::from_scalars(
            &(0..n).map(|i| start + i as f64 * step).collect::<Vec<_>>(),
        ))
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Index of the first row exactly equal to `x`.
    pub fn position(&self, x: &[f64]) -> Option<usize> {
        self.iter().position(|r| r == x)
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// First coordinate of every point.
    pub fn first_coords(&self) -> Vec<f64> {
        self.iter().map(|r| r[0]).collect()
    }

    pub(crate) fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `a·exp(−‖x − x'‖ / ℓ)`
    Exponential,
    /// `a·exp(−‖x − x'‖² / (2ℓ²))`
    SquaredExponential,
}

/// Stationary covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    length_scale: f64,
    amplitude: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, length_scale: f64, amplitude: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "kernel length-scale must be positive, got {length_scale}"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            kind,
            length_scale,
            amplitude,
        })
    }

    /// `exp(−‖t₁ − t₂‖ / 2)`, the kernel used for the droplet data.
    pub fn droplet() -> Self {
        Self {
            kind: KernelKind::Exponential,
            length_scale: 2.0,
            amplitude: 1.0,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self.kind {
            KernelKind::Exponential => {
                self.amplitude * libm::exp(-libm::sqrt(d2) / self.length_scale)
            }
            KernelKind::SquaredExponential => {
                self.amplitude * libm::exp(-0.5 * d2 / (self.length_scale * self.length_scale))
            }
        }
    }
}

/// Matrix with entries `k(aᵢ, bⱼ)`.
pub fn kernel_matrix(k: &Kernel, a: &Points, b: &Points) -> Matrix {
    Matrix::from_fn(a.len(), b.len(), |i, j| k.eval(a.row(i), b.row(j)))
}

fn kernel_sym(k: &Kernel, a: &Points) -> SymMatrix {
    SymMatrix::symmetrize(&kernel_matrix(k, a, a))
}

/// User-supplied mean; must be deterministic and side-effect free.
pub type MeanClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Prior mean function.
#[derive(Clone)]
pub enum MeanFn {
    Constant(f64),
    Custom(MeanClosure),
}

impl MeanFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFn::Constant(c) => *c,
            MeanFn::Custom(f) => f(x),
        }
    }

    fn on(&self, pts: &Points) -> Vec<f64> {
        pts.iter().map(|x| self.eval(x)).collect()
    }
}

impl Default for MeanFn {
    fn default() -> Self {
        MeanFn::Constant(0.0)
    }
}

impl fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFn::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            MeanFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// GP prior with Gaussian observation noise of variance `noise_var`.
#[derive(Debug, Clone)]
pub struct GpPrior {
    pub mean: MeanFn,
    pub kernel: Kernel,
    noise_var: f64,
}

impl GpPrior {
    /// Prior with zero mean.
    pub fn new(kernel: Kernel, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self {
            mean: MeanFn::default(),
            kernel,
            noise_var,
        })
    }

    pub fn with_mean(mut self, mean: MeanFn) -> Self {
        self.mean = mean;
        self
    }

    /// `σ² = 0.01`, `m ≡ 6`, `K(t₁, t₂) = exp(−|t₁ − t₂|/2)`.
    pub fn droplet() -> Self {
        Self {
            mean: MeanFn::Constant(6.0),
            kernel: Kernel::droplet(),
            noise_var: 0.01,
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }
}

/// Normal law of `g` on a finite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub grid: Points,
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    /// Diagonal jitter that had to be added to `K(X, X) + σ² I`.
    pub jitter: f64,
}

impl GpPosterior {
    /// The prior itself restricted to `grid` (no data).
    pub fn prior_on(prior: &GpPrior, grid: &Points) -> Self {
        Self {
            grid: grid.clone(),
            mean: prior.mean.on(grid),
            cov: kernel_sym(&prior.kernel, grid),
            jitter: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Smallest eigenvalue relative to the trace must exceed `−1e-9`.
    pub fn check_psd(&self) -> Result<()> {
        let eig = sym_eigen(&self.cov)?;
        let tr = self.cov.as_matrix().trace().abs();
        match eig.values.last() {
            Some(&l) if l < -1e-9 * tr => Err(Error::NotPositiveSemidefinite { value: l }),
            _ => Ok(()),
        }
    }
}

/// Conjugate GP posterior of `g` on `grid` given observations.
pub fn posterior(prior: &GpPrior, x_obs: &Points, y_obs: &[f64], grid: &Points) -> Result<GpPosterior> {
    if x_obs.len() != y_obs.len() {
        return Err(Error::DimensionMismatch {
            expected: x_obs.len(),
            found: y_obs.len(),
        });
    }
    if x_obs.is_empty() || grid.is_empty() {
        return Err(Error::InvalidArgument(
            "posterior needs at least one observation and one grid point".into(),
        ));
    }
    if x_obs.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: x_obs.dim(),
            found: grid.dim(),
        });
    }
    let mut kxx = kernel_matrix(&prior.kernel, x_obs, x_obs);
    kxx.add_diag(prior.noise_var);
    let (chol, jitter) = cholesky_jittered(&SymMatrix::symmetrize(&kxx))?;
    if jitter > 0.0 {
        log::warn!("kernel matrix needed diagonal jitter {jitter:e}");
    }

    let kxg = kernel_matrix(&prior.kernel, x_obs, grid);
    let resid: Vec<f64> = y_obs
        .iter()
        .zip(prior.mean.on(x_obs))
        .map(|(y, m)| y - m)
        .collect();
    let alpha = chol.solve_vec(&resid)?;
    let shift = kxg.tr_matvec(&alpha)?;
    let mean: Vec<f64> = prior
        .mean
        .on(grid)
        .into_iter()
        .zip(shift)
        .map(|(m, s)| m + s)
        .collect();

    // Σ = K(X', X') − W'W with W = L⁻¹ K(X, X')
    let m = grid.len();
    let n = x_obs.len();
    let mut w = Matrix::zeros(n, m);
    for j in 0..m {
        let col = chol.solve_lower(&kxg.col(j));
        for (i, v) in col.into_iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    let kgg = kernel_matrix(&prior.kernel, grid, grid);
    let cov = kgg.sub(&w.transpose().matmul(&w)?)?;

    Ok(GpPosterior {
        grid: grid.clone(),
        mean,
        cov: SymMatrix::symmetrize(&cov),
        jitter,
    })
}

/// `count` independent draws from `N(mean, cov)`, one per row. The
/// covariance square root comes from the eigendecomposition so singular
/// (PSD) covariances still draw.
pub fn draw_paths(post: &GpPosterior, count: usize, seed: u64) -> Result<Matrix> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let m = post.len();
    let root = psd_sqrt_factor(&sym_eigen(&post.cov)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(count, m);
    let mut z = alloc::vec![0.0; m];
    for r in 0..count {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let path = root.matvec(&z)?;
        for j in 0..m {
            out[(r, j)] = post.mean[j] + path[j];
        }
    }
    Ok(out)
}

/// Data grouped by exactly repeated design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedData {
    /// `X*`, in order of first appearance.
    pub unique_rows: Points,
    /// Diagonal of `D_n`: multiplicity of each unique row.
    pub counts: Vec<usize>,
    /// `ȳ`: mean response for each unique row.
    pub group_means: Vec<f64>,
    /// `Σ_groups Σ (yᵢ − ȳ_group)²`.
    pub within_ss: f64,
}

impl CollapsedData {
    pub fn n_unique(&self) -> usize {
        self.counts.len()
    }

    pub fn n_total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Groups exactly equal covariate rows (no floating tolerance).
pub fn collapse(x_obs: &Points, y_obs: &[f64]) -> Result<CollapsedData> {
    if x_obs.len() != y_obs.len() {
        return Err(Error::DimensionMismatch {
            expected: x_obs.len(),
            found: y_obs.len(),
        });
    }
    let mut unique = Points::empty(x_obs.dim());
    let mut group_of = Vec::with_capacity(y_obs.len());
    let mut counts: Vec<usize> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for (x, &y) in x_obs.iter().zip(y_obs) {
        let g = match unique.position(x) {
            Some(g) => g,
            None => {
                unique.push(x);
                counts.push(0);
                sums.push(0.0);
                counts.len() - 1
            }
        };
        counts[g] += 1;
        sums[g] += y;
        group_of.push(g);
    }
    let group_means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let within_ss = if counts.iter().all(|&c| c == 1) {
        0.0
    } else {
        group_of
            .iter()
            .zip(y_obs)
            .map(|(&g, &y)| (y - group_means[g]) * (y - group_means[g]))
            .sum()
    };
    Ok(CollapsedData {
        unique_rows: unique,
        counts,
        group_means,
        within_ss,
    })
}

/// `(h − ȳ)' D_n (h − ȳ)` for `h` evaluated on `X*`.
pub fn wrss(h_values: &[f64], c: &CollapsedData) -> Result<f64> {
    if h_values.len() != c.n_unique() {
        return Err(Error::DimensionMismatch {
            expected: c.n_unique(),
            found: h_values.len(),
        });
    }
    Ok(h_values
        .iter()
        .zip(&c.group_means)
        .zip(&c.counts)
        .map(|((h, y), &n)| n as f64 * (h - y) * (h - y))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exponential_kernel_values() {
        let k = Kernel::droplet();
        let p = Points::from_scalars(&[0.0]);
        assert_eq!(kernel_matrix(&k, &p, &p)[(0, 0)], 1.0);
        let p = Points::from_scalars(&[0.0, 2.0]);
        let m = kernel_matrix(&k, &p, &p);
        assert!((m[(0, 1)] - libm::exp(-1.0)).abs() < 1e-15);
        assert!((m[(0, 1)] - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn squared_exponential_kernel_value() {
        let k = Kernel::new(KernelKind::SquaredExponential, 1.0, 1.0).unwrap();
        let p = Points::from_scalars(&[0.0, 1.0]);
        assert!((kernel_matrix(&k, &p, &p)[(0, 1)] - libm::exp(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(Kernel::new(KernelKind::Exponential, 0.0, 1.0).is_err());
        assert!(Kernel::new(KernelKind::Exponential, 1.0, -1.0).is_err());
        assert!(GpPrior::new(Kernel::droplet(), 0.0).is_err());
    }

    #[test]
    fn single_observation_posterior_mean() {
        let prior = GpPrior::droplet();
        let x = Points::from_scalars(&[0.0]);
        let post = posterior(&prior, &x, &[7.0], &x).unwrap();
        // 6 + (1/1.01)(7 − 6)
        assert!((post.mean[0] - (6.0 + 1.0 / 1.01)).abs() < 1e-12);
        assert!((post.mean[0] - 6.9901).abs() < 1e-4);
        // 1 − 1/1.01
        assert!((post.cov[(0, 0)] - (1.0 - 1.0 / 1.01)).abs() < 1e-12);
    }

    #[test]
    fn interpolation_limit() {
        let prior = GpPrior::new(Kernel::droplet(), 1e-12).unwrap();
        let x = Points::from_scalars(&[0.0, 0.7, 1.9, 3.0]);
        let y = [1.0, -2.0, 0.5, 3.0];
        let post = posterior(&prior, &x, &y, &x).unwrap();
        for (m, y) in post.mean.iter().zip(&y) {
            assert!((m - y).abs() < 1e-4);
        }
    }

    #[test]
    fn posterior_never_inflates_marginal_variance() {
        let prior = GpPrior::droplet();
        let x = Points::from_scalars(&[0.5, 1.0, 1.5, 4.0, 4.0]);
        let y = [5.0, 5.1, 4.9, 4.0, 4.2];
        let post = posterior(&prior, &x, &y, &x).unwrap();
        for i in 0..x.len() {
            assert!(post.cov[(i, i)] <= prior.kernel.amplitude());
        }
        post.check_psd().unwrap();
    }

    #[test]
    fn zero_covariance_draws_equal_mean() {
        let post = GpPosterior {
            grid: Points::from_scalars(&[0.0, 1.0]),
            mean: vec![1.5, -2.0],
            cov: SymMatrix::from_diag(&[0.0, 0.0]),
            jitter: 0.0,
        };
        let d = draw_paths(&post, 3, 9).unwrap();
        for r in 0..3 {
            assert_eq!(d.row(r), &[1.5, -2.0]);
        }
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        let prior = GpPrior::droplet();
        let grid = Points::regular_grid(0.0, 7.0, 0.5).unwrap();
        let post = GpPosterior::prior_on(&prior, &grid);
        assert_eq!(draw_paths(&post, 4, 42).unwrap(), draw_paths(&post, 4, 42).unwrap());
        assert_ne!(draw_paths(&post, 4, 42).unwrap(), draw_paths(&post, 4, 43).unwrap());
    }

    #[test]
    fn collapse_examples() {
        let c = collapse(&Points::from_scalars(&[1.0, 2.0, 3.0]), &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(c.counts, vec![1, 1, 1]);
        assert_eq!(c.group_means, vec![4.0, 5.0, 6.0]);
        assert_eq!(c.within_ss, 0.0);

        let c = collapse(&Points::from_scalars(&[1.0, 1.0]), &[3.0, 5.0]).unwrap();
        assert_eq!(c.unique_rows, Points::from_scalars(&[1.0]));
        assert_eq!((c.counts.clone(), c.group_means.clone(), c.within_ss), (vec![2], vec![4.0], 2.0));

        let c = collapse(&Points::from_scalars(&[2.0, 1.0, 2.0]), &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(c.unique_rows, Points::from_scalars(&[2.0, 1.0]));
        assert_eq!(c.counts, vec![2, 1]);
        assert_eq!(c.group_means, vec![2.0, 1.0]);
        assert_eq!(c.within_ss, 2.0);
        assert_eq!(c.n_total(), 3);

        assert!(collapse(&Points::from_scalars(&[1.0]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn wrss_examples() {
        let c = CollapsedData {
            unique_rows: Points::from_scalars(&[2.0, 1.0]),
            counts: vec![2, 1],
            group_means: vec![4.0, 1.0],
            within_ss: 0.0,
        };
        assert_eq!(wrss(&[4.0, 1.0], &c).unwrap(), 0.0);
        assert_eq!(wrss(&[5.0, 0.0], &c).unwrap(), 3.0);
        assert!(wrss(&[1.0], &c).is_err());
    }

    #[test]
    fn regular_grid_includes_endpoint() {
        let g = Points::regular_grid(0.0, 7.0, 0.5).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.row(14), &[7.0]);
        assert_eq!(Points::regular_grid(0.0, 7.0, 0.05).unwrap().len(), 141);
    }
}
