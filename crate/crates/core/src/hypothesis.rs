//! Linear-model hypotheses `g(x) = b(x)β` and their projection matrices.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::gp::Points;
use crate::measure::CovariateMeasure;
use crate::numerics::{cholesky, sym_eigen, Matrix, SymMatrix};

/// Smallest accepted eigenvalue of a basis Gram matrix, relative to the largest.
pub const RANK_RTOL: f64 = 1e-12;

type BasisFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum BasisEval {
    Intercept,
    InterceptSlope,
    Affine,
    Tabulated { points: Points, rows: Matrix },
    Custom(BasisFn),
}

/// A set of `k` basis functions `b(x) = (b₁(x), …, b_k(x))`.
#[derive(Clone)]
pub struct LinearBasis {
    name: String,
    k: usize,
    eval: BasisEval,
}

impl LinearBasis {
    /// `b(x) = 1`.
    pub fn intercept() -> Self {
        Self {
            name: "intercept".into(),
            k: 1,
            eval: BasisEval::Intercept,
        }
    }

    /// `b(x) = (1, x₁)`.
    pub fn intercept_slope() -> Self {
        Self {
            name: "intercept+slope".into(),
            k: 2,
            eval: BasisEval::InterceptSlope,
        }
    }

    /// `b(x) = (1, x₁, …, x_d)`.
    pub fn affine(dim: usize) -> Self {
        Self {
            name: alloc::format!("affine{dim}"),
            k: dim + 1,
            eval: BasisEval::Affine,
        }
    }

    /// Basis given by a table: row `i` of `rows` is `b(points[i])`.
    pub fn tabulated(name: impl Into<String>, points: Points, rows: Matrix) -> Result<Self> {
        if points.len() != rows.rows() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: rows.rows(),
            });
        }
        Ok(Self {
            name: name.into(),
            k: rows.cols(),
            eval: BasisEval::Tabulated { points, rows },
        })
    }

    /// User basis; `f(x, out)` writes `b(x)` into `out` (length `k`). It must
    /// be deterministic and side-effect free.
    pub fn custom(
        name: impl Into<String>,
        k: usize,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            k,
            eval: BasisEval::Custom(Arc::new(f)),
        }
    }

    /// The basis `b(x)·T` for an invertible `k × k` matrix `T`; it spans the
    /// same hypothesis.
    pub fn reparameterized(&self, t: Matrix) -> Result<Self> {
        if t.rows() != self.k || t.cols() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: t.rows(),
            });
        }
        let inner = self.clone();
        let k = self.k;
        Ok(Self::custom(alloc::format!("{}·T", self.name), k, move |x, out| {
            let mut row = alloc::vec![0.0; k];
            inner.eval_into(x, &mut row).expect("reparameterized basis must be evaluable");
            for (j, o) in out.iter_mut().enumerate() {
                *o = (0..k).map(|i| row[i] * t[(i, j)]).sum();
            }
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.eval {
            BasisEval::Intercept => out[0] = 1.0,
            BasisEval::InterceptSlope => {
                out[0] = 1.0;
                out[1] = x[0];
            }
            BasisEval::Affine => {
                if x.len() + 1 != self.k {
                    return Err(Error::DimensionMismatch {
                        expected: self.k - 1,
                        found: x.len(),
                    });
                }
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            BasisEval::Tabulated { points, rows } => {
                let i = points.position(x).ok_or_else(|| {
                    Error::InvalidArgument(alloc::format!(
                        "tabulated basis '{}' has no row for {x:?}",
                        self.name
                    ))
                })?;
                out.copy_from_slice(rows.row(i));
            }
            BasisEval::Custom(f) => f(x, out),
        }
        Ok(())
    }
}

impl fmt::Debug for LinearBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearBasis")
            .field("name", &self.name)
            .field("k", &self.k)
            .finish()
    }
}

/// `n × k` matrix with row `i` equal to `b(pointsᵢ)`.
pub fn design_matrix(b: &LinearBasis, points: &Points) -> Result<Matrix> {
    let mut out = Matrix::zeros(points.len(), b.k());
    let mut row = alloc::vec![0.0; b.k()];
    for (i, x) in points.iter().enumerate() {
        b.eval_into(x, &mut row)?;
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// `M = I − B(B'B)⁻¹B'`
    UnweightedM,
    /// `N = D_P[I − B(B'D_P B)⁻¹B'D_P]`
    WeightedN,
}

#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub matrix: SymMatrix,
    pub kind: ProjectionKind,
    pub basis: LinearBasis,
    pub points: Points,
}

/// Inverse of a Gram matrix, failing with `RankDeficient` when its
/// condition exceeds `1/RANK_RTOL`.
fn gram_inverse(g: &SymMatrix, what: &str) -> Result<SymMatrix> {
    let eig = sym_eigen(g)?;
    let max = eig.values.first().copied().unwrap_or(0.0);
    let min = eig.values.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= RANK_RTOL * max {
        return Err(Error::RankDeficient(alloc::format!(
            "{what}: Gram eigenvalues span [{min:e}, {max:e}]"
        )));
    }
    Ok(cholesky(g)?.inverse())
}

fn check_rank_dims(b: &LinearBasis, n: usize) -> Result<()> {
    if n < b.k() {
        return Err(Error::RankDeficient(alloc::format!(
            "basis '{}' has k = {} functions but only {n} points",
            b.name(),
            b.k()
        )));
    }
    Ok(())
}

/// Residual-maker `M = I − B(B'B)⁻¹B'` on `points`.
pub fn projection_m(b: &LinearBasis, points: &Points) -> Result<ProjectionPair> {
    let n = points.len();
    check_rank_dims(b, n)?;
    let bm = design_matrix(b, points)?;
    let ginv = gram_inverse(&SymMatrix::symmetrize(&bm.transpose().matmul(&bm)?), b.name())?;
    let hat = bm.matmul(ginv.as_matrix())?.matmul(&bm.transpose())?;
    let m = Matrix::identity(n).sub(&hat)?;
    Ok(ProjectionPair {
        matrix: SymMatrix::symmetrize(&m),
        kind: ProjectionKind::UnweightedM,
        basis: b.clone(),
        points: points.clone(),
    })
}

/// `N = D_P − D_P B (B'D_P B)⁻¹ B'D_P` on `points` with weights from `w`.
/// Points the measure does not charge get zero rows and columns.
pub fn projection_n(b: &LinearBasis, points: &Points, w: &CovariateMeasure) -> Result<ProjectionPair> {
    let p = w.weights_on(points);
    let zero = p.iter().filter(|&&v| v == 0.0).count();
    if zero > 0 {
        log::info!("dropping {zero} zero-weight atom(s) from the weighted projection");
    }
    let matrix = weighted_residual_maker(b, points, &p)?;
    Ok(ProjectionPair {
        matrix,
        kind: ProjectionKind::WeightedN,
        basis: b.clone(),
        points: points.clone(),
    })
}

pub(crate) fn weighted_residual_maker(b: &LinearBasis, points: &Points, p: &[f64]) -> Result<SymMatrix> {
    let n = points.len();
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.len(),
        });
    }
    let support = p.iter().filter(|&&v| v > 0.0).count();
    check_rank_dims(b, support)?;
    let bm = design_matrix(b, points)?;
    let db = Matrix::from_fn(n, b.k(), |i, j| p[i] * bm[(i, j)]);
    let ginv = gram_inverse(&SymMatrix::symmetrize(&bm.transpose().matmul(&db)?), b.name())?;
    let corr = db.matmul(ginv.as_matrix())?.matmul(&db.transpose())?;
    Ok(SymMatrix::symmetrize(&Matrix::from_diag(p).sub(&corr)?))
}

/// Weighted least-squares projection of `h` onto the span of `b`:
/// returns `β̃ = A⁻¹h_b` with `A = Σ pᵢ b(xᵢ)b(xᵢ)'`, `h_b = Σ pᵢ h(xᵢ) b(xᵢ)`,
/// and the minimized `Σ pᵢ (h(xᵢ) − b(xᵢ)β̃)²`.
pub fn weighted_projection(
    b: &LinearBasis,
    points: &Points,
    p: &[f64],
    h: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = points.len();
    if p.len() != n || h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if p.len() != n { p.len() } else { h.len() },
        });
    }
    check_rank_dims(b, p.iter().filter(|&&v| v > 0.0).count())?;
    let bm = design_matrix(b, points)?;
    let k = b.k();
    let a = Matrix::from_fn(k, k, |i, j| (0..n).map(|r| p[r] * bm[(r, i)] * bm[(r, j)]).sum());
    let hb: Vec<f64> = (0..k).map(|i| (0..n).map(|r| p[r] * h[r] * bm[(r, i)]).sum()).collect();
    let ainv = gram_inverse(&SymMatrix::symmetrize(&a), b.name())?;
    let beta = ainv.as_matrix().matvec(&hb)?;
    let fitted = bm.matvec(&beta)?;
    let ss = (0..n)
        .map(|r| p[r] * (h[r] - fitted[r]) * (h[r] - fitted[r]))
        .sum::<f64>()
        .max(0.0);
    Ok((beta, ss))
}

/// L² projection of `h` onto the linear-model set under the atoms of `w`.
/// Returns `β̃` and the distance `√E[(h − bβ̃)²]`.
pub fn l2_projection(
    h_values: &[f64],
    b: &LinearBasis,
    points: &Points,
    w: &CovariateMeasure,
) -> Result<(Vec<f64>, f64)> {
    let p = w.weights_on(points);
    let (beta, ss) = weighted_projection(b, points, &p, h_values)?;
    Ok((beta, libm::sqrt(ss)))
}
