//! FBST procedures for `H₀: g = bβ` and its pragmatic enlargement.
//!
//! Every procedure reduces to comparing a highest-posterior-density ellipsoid
//! with the hypothesis set:
//!
//! | method              | HPD                               | hypothesis set      |
//! |---------------------|-----------------------------------|---------------------|
//! | linear, finite 𝒳    | `(h−μ)'Σ⁻¹(h−μ) ≤ q_{1−α}(χ²_|𝒳|)` | `h = Bβ`            |
//! | linear, infinite 𝒳  | `WRSS(h) ≤ c_α`                   | `h = Bβ` on `X*`    |
//! | pragmatic, finite   | as above                          | `h'Nh ≤ ε²`         |
//! | pragmatic, infinite | `WRSS(h) ≤ c_α`                   | `h'Mh ≤ ε²` on `X*` |
//!
//! The e-value is the posterior probability that the HPD-defining statistic
//! exceeds its minimum over the hypothesis set. For the pragmatic tests the
//! accept/reject decision is taken from the geometric intersection test
//! (minimum of the hypothesis quadratic over the HPD ellipsoid), and the
//! e-value from the dual problem (minimum of the HPD statistic over the
//! hypothesis set); the two agree up to ties.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gchi2::{quadform_law, quantile as gchi2_quantile, sf as gchi2_sf};
use crate::gp::{CollapsedData, GpPosterior};
use crate::hypothesis::{design_matrix, projection_n, weighted_projection, weighted_residual_maker, LinearBasis};
use crate::measure::{check_support, CovariateMeasure};
use crate::numerics::{
    chi2_quantile, chi2_sf, cholesky, cholesky_jittered, dot, find_root, golden_section_min, norm, pinv,
    sym_eigen, Cholesky, Matrix, SymMatrix, PINV_RTOL,
};

/// e-values below this are reported as 0, above `1 −` this as 1.
pub const EVALUE_CLAMP: f64 = 1e-12;
/// Default grid size for the literal s-condition scan.
pub const S_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LinearFinite,
    LinearInfinite,
    PragmaticFinite,
    PragmaticInfinite,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::LinearFinite => "precise-finite",
            Method::LinearInfinite => "precise-infinite",
            Method::PragmaticFinite => "pragmatic-finite",
            Method::PragmaticInfinite => "pragmatic-infinite",
        }
    }

    pub fn is_pragmatic(&self) -> bool {
        matches!(self, Method::PragmaticFinite | Method::PragmaticInfinite)
    }

    pub fn is_finite_domain(&self) -> bool {
        matches!(self, Method::LinearFinite | Method::PragmaticFinite)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Best-fitting coefficients of the linear model (precise tests).
    pub beta: Option<Vec<f64>>,
    /// Lagrange multiplier of the tangency problem (pragmatic tests).
    pub lambda: Option<f64>,
    /// Minimum of the hypothesis quadratic over the HPD ellipsoid.
    pub hpd_min_distance2: Option<f64>,
    /// Literal s-condition evaluated with a pseudo-inverse.
    pub s_condition: Option<SCondition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbstOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub e_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

/// `Pg(H₀)` with the L² dissimilarity under `measure` and tolerance `epsilon`.
#[derive(Debug, Clone)]
pub struct PragmaticSpec {
    epsilon: f64,
    pub measure: CovariateMeasure,
    pub basis: LinearBasis,
}

impl PragmaticSpec {
    pub fn new(epsilon: f64, measure: CovariateMeasure, basis: LinearBasis) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::InvalidArgument(alloc::format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            measure,
            basis,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

pub fn clamp_evalue(e: f64) -> f64 {
    if e < EVALUE_CLAMP {
        0.0
    } else if e > 1.0 - EVALUE_CLAMP {
        1.0
    } else {
        e
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Precise test on a finite domain: generalized least squares of the
/// posterior mean onto the basis, compared with the `χ²_{|𝒳|}` quantile.
pub fn test_linear_finite(post: &GpPosterior, b: &LinearBasis, alpha: f64) -> Result<FbstOutcome> {
    check_alpha(alpha)?;
    let n = post.len();
    let (chol, jitter) = cholesky_jittered(&post.cov)?;
    if jitter > 0.0 {
        log::warn!("posterior covariance needed jitter {jitter:e}");
    }
    let bm = design_matrix(b, &post.grid)?;
    // whitening turns GLS into ordinary least squares
    let bw = whiten_columns(&chol, &bm);
    let mw = chol.solve_lower(&post.mean);
    if n < b.k() {
        return Err(Error::RankDeficient(alloc::format!(
            "basis '{}' has k = {} functions but the grid has {n} points",
            b.name(),
            b.k()
        )));
    }
    let (beta, statistic) = least_squares(&bw, &mw)?;
    let threshold = chi2_quantile(1.0 - alpha, n)?;
    let e_value = clamp_evalue(chi2_sf(statistic, n));
    Ok(FbstOutcome {
        statistic,
        threshold,
        e_value,
        alpha,
        reject: statistic > threshold,
        method: Method::LinearFinite,
        diagnostics: Diagnostics {
            beta: Some(beta),
            ..Default::default()
        },
    })
}

fn whiten_columns(chol: &Cholesky, m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        for (i, v) in chol.solve_lower(&m.col(j)).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Ordinary least squares of `y` on the columns of `x`: `(β̂, ‖y − xβ̂‖²)`.
fn least_squares(x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let gram = SymMatrix::symmetrize(&x.transpose().matmul(x)?);
    let beta = cholesky(&gram)
        .map_err(|_| Error::RankDeficient("design is not of full column rank on the grid".into()))?
        .solve_vec(&x.tr_matvec(y)?)?;
    let fitted = x.matvec(&beta)?;
    let rss = y.iter().zip(&fitted).map(|(a, f)| (a - f) * (a - f)).sum();
    Ok((beta, rss))
}

/// Precise test on an infinite domain. The statistic is the minimum of
/// `WRSS(Bβ)` over `β` on the collapsed scale (equal to `y'My − within_ss`);
/// the threshold is the `1 − α` quantile of the posterior law of `WRSS(g)`.
pub fn test_linear_infinite(
    data: &CollapsedData,
    post_on_xstar: &GpPosterior,
    b: &LinearBasis,
    alpha: f64,
) -> Result<FbstOutcome> {
    check_alpha(alpha)?;
    let (beta, statistic) =
        weighted_projection(b, &data.unique_rows, &data.counts_f64(), &data.group_means)?;
    let law = quadform_law(post_on_xstar, data)?;
    let threshold = gchi2_quantile(&law, 1.0 - alpha)?;
    let e_value = clamp_evalue(gchi2_sf(&law, statistic)?);
    Ok(FbstOutcome {
        statistic,
        threshold,
        e_value,
        alpha,
        reject: statistic > threshold,
        method: Method::LinearInfinite,
        diagnostics: Diagnostics {
            beta: Some(beta),
            ..Default::default()
        },
    })
}

/// Solution of a tangency problem between two quadrics.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    pub min_value: f64,
    pub h: Vec<f64>,
    pub lambda: f64,
    /// Largest of the relative stationarity residual and the relative
    /// constraint violation at the solution.
    pub kkt_residual: f64,
}

/// Shared change of variables `h = μ + R z` with `Q = R R'`, in which the
/// second quadric becomes `z'Ñz + 2c'z + γ` and `Ñ = W Ω W'`.
struct Whitened {
    r: Matrix,
    omega: Vec<f64>,
    w: Matrix,
    /// `W'c`
    c: Vec<f64>,
    gamma: f64,
}

impl Whitened {
    fn new(center: &[f64], shape: &SymMatrix, constraint: &SymMatrix) -> Result<Self> {
        let n = center.len();
        if shape.dim() != n || constraint.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if shape.dim() != n { shape.dim() } else { constraint.dim() },
            });
        }
        let (chol, _) = cholesky_jittered(shape)?;
        let r = chol.factor().clone();
        let nm = constraint.as_matrix();
        let n_mu = nm.matvec(center)?;
        let gamma = dot(center, &n_mu);
        let rt = r.transpose();
        let tilde = SymMatrix::symmetrize(&rt.matmul(nm)?.matmul(&r)?);
        let eig = sym_eigen(&tilde)?;
        let c_full = rt.matvec(&n_mu)?;
        let c = eig.project(&c_full);
        let omega = eig.values.iter().map(|&o| o.max(0.0)).collect();
        Ok(Self {
            r,
            omega,
            w: eig.vectors,
            c,
            gamma,
        })
    }

    fn h_from(&self, center: &[f64], zc: &[f64]) -> Vec<f64> {
        let z = self.w.matvec(zc).expect("eigenvector dimension");
        let rz = self.r.matvec(&z).expect("factor dimension");
        center.iter().zip(rz).map(|(m, d)| m + d).collect()
    }
}

/// Minimizes `(h − μ₀)'Q⁻¹(h − μ₀)` subject to `h'Nh ≤ bound` (`Q` PD,
/// `N` PSD). Returns 0 when `μ₀` is feasible; otherwise the multiplier
/// `λ ≥ 0` of `h(λ) = (Q⁻¹ + λN)⁻¹Q⁻¹μ₀` is found by bisection on the
/// decreasing map `λ ↦ h(λ)'Nh(λ)`.
pub fn qcqp_min(center: &[f64], shape: &SymMatrix, constraint: &SymMatrix, bound: f64) -> Result<QcqpSolution> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("bound must be positive, got {bound}")));
    }
    let wh = Whitened::new(center, shape, constraint)?;
    if wh.gamma <= bound {
        return Ok(QcqpSolution {
            min_value: 0.0,
            h: center.to_vec(),
            lambda: 0.0,
            kkt_residual: 0.0,
        });
    }
    // constraint value along the multiplier path, in whitened eigen-coordinates
    let g = |lam: f64| -> f64 {
        wh.gamma
            - wh.omega
                .iter()
                .zip(&wh.c)
                .map(|(&o, &c)| {
                    let d = 1.0 + lam * o;
                    lam * c * c * (2.0 + lam * o) / (d * d)
                })
                .sum::<f64>()
    };
    let mut hi = 1.0;
    let mut steps = 0;
    while g(hi) > bound {
        hi *= 2.0;
        steps += 1;
        if steps > 2000 || !hi.is_finite() {
            return Err(Error::NumericalFailure(alloc::format!(
                "could not bracket the multiplier: constraint value {} stays above {bound}",
                g(hi)
            )));
        }
    }
    let mut last = (0.0f64, wh.gamma);
    let lam = find_root(
        |t| {
            let lam = t * hi;
            let v = g(lam);
            // the constraint value must not increase along the multiplier path
            debug_assert!(
                lam < last.0 || v <= last.1 + 1e-9 * last.1.abs().max(bound),
                "constraint path not monotone"
            );
            if lam >= last.0 {
                last = (lam, v);
            }
            (v - bound) / bound
        },
        0.0,
        1.0,
        1e-15,
    )? * hi;

    let zc: Vec<f64> = wh
        .omega
        .iter()
        .zip(&wh.c)
        .map(|(&o, &c)| -lam * c / (1.0 + lam * o))
        .collect();
    let min_value = dot(&zc, &zc);
    let h = wh.h_from(center, &zc);

    // stationarity in whitened form: z + λ R'N h = 0
    let nh = constraint.as_matrix().matvec(&h)?;
    let rtnh = wh.w.tr_matvec(&wh.r.tr_matvec(&nh)?)?;
    let grad: Vec<f64> = zc.iter().zip(&rtnh).map(|(z, g)| z + lam * g).collect();
    let scale = norm(&zc).max(lam * norm(&rtnh)).max(f64::MIN_POSITIVE);
    let stationarity = norm(&grad) / scale;
    let feasibility = (dot(&h, &nh) - bound).abs() / bound;

    Ok(QcqpSolution {
        min_value,
        h,
        lambda: lam,
        kkt_residual: stationarity.max(feasibility),
    })
}

/// Minimizes `h'Nh` over the ellipsoid `(h − μ)'Q⁻¹(h − μ) ≤ radius2`
/// (a convex trust-region subproblem after whitening). Returns the minimum
/// and the minimizer.
pub fn hpd_min_quadratic(
    center: &[f64],
    shape: &SymMatrix,
    objective: &SymMatrix,
    radius2: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(radius2 >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("radius² must be nonnegative, got {radius2}")));
    }
    let wh = Whitened::new(center, shape, objective)?;
    let omax = wh.omega.iter().fold(0.0f64, |m, &o| m.max(o));
    let cut = 1e-12 * omax;
    let cnorm = norm(&wh.c);
    let value_at = |zc: &[f64]| -> f64 {
        let v = wh.gamma
            + wh.omega
                .iter()
                .zip(&wh.c)
                .zip(zc)
                .map(|((&o, &c), &z)| o * z * z + 2.0 * c * z)
                .sum::<f64>();
        v.max(0.0)
    };

    // unconstrained minimizer, if the objective is bounded along its null space
    let bounded = wh
        .omega
        .iter()
        .zip(&wh.c)
        .all(|(&o, &c)| o > cut || c.abs() <= 1e-12 * cnorm.max(f64::MIN_POSITIVE));
    if bounded {
        let z0: Vec<f64> = wh
            .omega
            .iter()
            .zip(&wh.c)
            .map(|(&o, &c)| if o > cut { -c / o } else { 0.0 })
            .collect();
        if dot(&z0, &z0) <= radius2 {
            return Ok((value_at(&z0), wh.h_from(center, &z0)));
        }
    }
    if radius2 == 0.0 || cnorm == 0.0 {
        let z0 = alloc::vec![0.0; center.len()];
        return Ok((value_at(&z0), center.to_vec()));
    }
    // ‖z(ν)‖² = Σ c²/(ω + ν)² decreases in ν; at ν = ‖c‖/r it is ≤ r²
    let hi = cnorm / libm::sqrt(radius2);
    let phi = |nu: f64| -> f64 {
        let s: f64 = wh
            .omega
            .iter()
            .zip(&wh.c)
            .filter(|(_, &c)| c != 0.0)
            .map(|(&o, &c)| c * c / ((o + nu) * (o + nu)))
            .sum();
        (s - radius2) / radius2
    };
    let lo = hi * 1e-300_f64.max(f64::MIN_POSITIVE);
    let nu = find_root(phi, lo, hi, 1e-15 * hi)?;
    let zc: Vec<f64> = wh
        .omega
        .iter()
        .zip(&wh.c)
        .map(|(&o, &c)| if c == 0.0 { 0.0 } else { -c / (o + nu) })
        .collect();
    Ok((value_at(&zc), wh.h_from(center, &zc)))
}

/// Result of scanning the literal s-condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SCondition {
    pub exists: bool,
    pub s_star: Option<f64>,
    /// Smallest value of `1 − c'(A/(1−s) + B/s)c` found.
    pub min_value: f64,
}

/// Scans `f(s) = 1 − c'(A/(1−s) + B/s)c` over `s ∈ (0, 1)` on a grid of
/// `grid_size` points, refines the best cell by golden-section search, and
/// reports whether `f(s) < 0` somewhere.
pub fn s_condition(center: &[f64], ell_a: &SymMatrix, ell_b: &SymMatrix, grid_size: usize) -> Result<SCondition> {
    let a = ell_a.quad_form(center)?;
    let b = ell_b.quad_form(center)?;
    let f = |s: f64| 1.0 - a / (1.0 - s) - b / s;
    let g = grid_size.max(2);
    let (mut best_s, mut best) = (0.5, f64::INFINITY);
    for i in 0..g {
        let s = (i as f64 + 0.5) / g as f64;
        let v = f(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    let half = 1.0 / g as f64;
    let (s_ref, v_ref) = golden_section_min(
        f,
        (best_s - half).max(0.5 * half),
        (best_s + half).min(1.0 - 0.5 * half),
        1e-14,
    );
    let (s_star, min_value) = if v_ref < best { (s_ref, v_ref) } else { (best_s, best) };
    let exists = min_value < 0.0;
    Ok(SCondition {
        exists,
        s_star: exists.then_some(s_star),
        min_value,
    })
}

/// Pragmatic test on a finite domain `𝒳 = post.grid`.
pub fn test_pragmatic_finite(post: &GpPosterior, spec: &PragmaticSpec, alpha: f64) -> Result<FbstOutcome> {
    check_alpha(alpha)?;
    if !check_support(&spec.measure, &post.grid) {
        return Err(Error::InvalidArgument(
            "the covariate measure must charge every point of the finite domain".into(),
        ));
    }
    let n = post.len();
    let eps2 = spec.epsilon * spec.epsilon;
    let nmat = projection_n(&spec.basis, &post.grid, &spec.measure)?.matrix;
    let q = chi2_quantile(1.0 - alpha, n)?;

    let tangency = qcqp_min(&post.mean, &post.cov, &nmat, eps2)?;
    let e_value = clamp_evalue(chi2_sf(tangency.min_value, n));
    let (hpd_min, _) = hpd_min_quadratic(&post.mean, &post.cov, &nmat, q)?;
    let reject = decide(Method::PragmaticFinite, tangency.min_value, q, hpd_min, eps2);

    let literal = s_condition(
        &post.mean,
        &SymMatrix::symmetrize(&pinv(&nmat, PINV_RTOL)?.as_matrix().scale(eps2)),
        &SymMatrix::symmetrize(&post.cov.as_matrix().scale(q)),
        S_GRID,
    )?;
    report_disagreement(Method::PragmaticFinite, reject, &literal);

    Ok(FbstOutcome {
        statistic: tangency.min_value,
        threshold: q,
        e_value,
        alpha,
        reject,
        method: Method::PragmaticFinite,
        diagnostics: Diagnostics {
            lambda: Some(tangency.lambda),
            hpd_min_distance2: Some(hpd_min),
            s_condition: Some(literal),
            ..Default::default()
        },
    })
}

/// Pragmatic test on an infinite domain, working on the unique rows `X*`
/// with the atom weights the measure assigns to them.
pub fn test_pragmatic_infinite(
    data: &CollapsedData,
    post_on_xstar: &GpPosterior,
    spec: &PragmaticSpec,
    alpha: f64,
) -> Result<FbstOutcome> {
    check_alpha(alpha)?;
    let xstar = &data.unique_rows;
    if !check_support(&spec.measure, xstar) {
        return Err(Error::InvalidArgument(
            "the covariate measure must charge every unique design row".into(),
        ));
    }
    let eps2 = spec.epsilon * spec.epsilon;
    let p = spec.measure.weights_on(xstar);
    let mmat = weighted_residual_maker(&spec.basis, xstar, &p)?;
    let law = quadform_law(post_on_xstar, data)?;
    let c_alpha = gchi2_quantile(&law, 1.0 - alpha)?;

    let counts = data.counts_f64();
    let inv_counts = SymMatrix::from_diag(&counts.iter().map(|c| 1.0 / c).collect::<Vec<_>>());
    let tangency = qcqp_min(&data.group_means, &inv_counts, &mmat, eps2)?;
    let e_value = clamp_evalue(gchi2_sf(&law, tangency.min_value)?);
    let (hpd_min, _) = hpd_min_quadratic(&data.group_means, &inv_counts, &mmat, c_alpha)?;
    let reject = decide(Method::PragmaticInfinite, tangency.min_value, c_alpha, hpd_min, eps2);

    let literal = s_condition(
        &data.group_means,
        &SymMatrix::symmetrize(&pinv(&mmat, PINV_RTOL)?.as_matrix().scale(eps2)),
        &SymMatrix::from_diag(&counts.iter().map(|c| c * c_alpha).collect::<Vec<_>>()),
        S_GRID,
    )?;
    report_disagreement(Method::PragmaticInfinite, reject, &literal);

    Ok(FbstOutcome {
        statistic: tangency.min_value,
        threshold: c_alpha,
        e_value,
        alpha,
        reject,
        method: Method::PragmaticInfinite,
        diagnostics: Diagnostics {
            lambda: Some(tangency.lambda),
            hpd_min_distance2: Some(hpd_min),
            s_condition: Some(literal),
            ..Default::default()
        },
    })
}

/// The HPD region misses the hypothesis set exactly when the tangency value
/// exceeds the HPD threshold, equivalently when the smallest hypothesis
/// distance inside the HPD region exceeds `ε²`. The first form is used so
/// that `reject ⟺ e ≤ α`; the second is a cross-check.
fn decide(method: Method, tangency: f64, threshold: f64, hpd_min: f64, eps2: f64) -> bool {
    let reject = tangency > threshold;
    let geometric = hpd_min > eps2;
    let near_tie = (tangency - threshold).abs() <= 1e-6 * threshold.max(1.0)
        || (hpd_min - eps2).abs() <= 1e-6 * eps2;
    if reject != geometric && !near_tie {
        log::warn!(
            "{}: primal and dual intersection checks disagree (tangency {tangency:e} vs {threshold:e}, hpd min {hpd_min:e} vs {eps2:e})",
            method.label()
        );
    }
    reject
}

fn report_disagreement(method: Method, reject: bool, literal: &SCondition) {
    // the literal condition says "not reject" exactly when some s gives f(s) < 0
    if literal.exists == reject {
        log::warn!(
            "{}: literal s-condition (min {:.6e}) disagrees with the geometric decision (reject = {reject})",
            method.label(),
            literal.min_value
        );
    }
}
