//! Probability measures over covariate points.
//!
//! Only atoms carry weight into the test matrices. A Dirichlet-process
//! predictive with a continuous base keeps its base mass `τ/(τ+n)` as
//! metadata.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gp::{collapse, Points};

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSource {
    FiniteUniform,
    ExplicitPmf,
    DpPredictive {
        tau: f64,
        base: String,
        n: usize,
        /// Mass `τπ(·)/(τ+n)` spread over the base measure without atoms.
        continuous_mass: f64,
    },
}

/// Centering measure `π` of a Dirichlet process.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMeasure {
    /// Atomless base, e.g. `U(0, 7)`; the label is kept for reports.
    Continuous { label: String },
    /// Discrete base given as a pmf.
    Discrete(Box<CovariateMeasure>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMeasure {
    pub atoms: Points,
    pub weights: Vec<f64>,
    pub total_atom_mass: f64,
    pub source: MeasureSource,
}

impl CovariateMeasure {
    /// Weight of `x`, 0 when `x` is not an atom.
    pub fn weight_of(&self, x: &[f64]) -> f64 {
        self.atoms.position(x).map_or(0.0, |i| self.weights[i])
    }

    pub fn weights_on(&self, pts: &Points) -> Vec<f64> {
        pts.iter().map(|x| self.weight_of(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Uniform pmf over a finite domain of distinct points.
pub fn finite_uniform(domain: &Points) -> Result<CovariateMeasure> {
    if domain.is_empty() {
        return Err(Error::InvalidArgument("empty domain".into()));
    }
    check_distinct(domain)?;
    let n = domain.len();
    Ok(CovariateMeasure {
        atoms: domain.clone(),
        weights: alloc::vec![1.0 / n as f64; n],
        total_atom_mass: 1.0,
        source: MeasureSource::FiniteUniform,
    })
}

/// Arbitrary pmf; weights must be nonnegative with total at most 1.
pub fn explicit_pmf(atoms: &Points, weights: Vec<f64>) -> Result<CovariateMeasure> {
    if atoms.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: atoms.len(),
            found: weights.len(),
        });
    }
    check_distinct(atoms)?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("pmf weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(alloc::format!("pmf total mass {total} exceeds 1")));
    }
    Ok(CovariateMeasure {
        atoms: atoms.clone(),
        weights,
        total_atom_mass: total,
        source: MeasureSource::ExplicitPmf,
    })
}

/// Predictive law of a new covariate under a `DP(τ, π)` prior given the
/// observed covariates: `τπ(A)/(τ+n) + Σ 𝕀(xᵢ ∈ A)/(τ+n)`.
///
/// With a continuous base every unique observation becomes an atom of weight
/// `count/(τ+n)`. With a discrete base the base atoms are merged in with
/// weight `τπ(x)/(τ+n)`.
pub fn dp_predictive(tau: f64, x_obs: &Points, base: &BaseMeasure) -> Result<CovariateMeasure> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("tau must be positive, got {tau}")));
    }
    if x_obs.is_empty() {
        return Err(Error::InvalidArgument("no observed covariates".into()));
    }
    let n = x_obs.len();
    let denom = tau + n as f64;
    let grouped = collapse(x_obs, &alloc::vec![0.0; n])?;
    let mut atoms = grouped.unique_rows;
    let mut weights: Vec<f64> = grouped.counts.iter().map(|&c| c as f64 / denom).collect();

    let (label, continuous_mass) = match base {
        BaseMeasure::Continuous { label } => (label.clone(), tau / denom),
        BaseMeasure::Discrete(pmf) => {
            if pmf.atoms.dim() != x_obs.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x_obs.dim(),
                    found: pmf.atoms.dim(),
                });
            }
            for (x, &w) in pmf.atoms.iter().zip(&pmf.weights) {
                let add = tau * w / denom;
                match atoms.position(x) {
                    Some(i) => weights[i] += add,
                    None => {
                        atoms.push(x);
                        weights.push(add);
                    }
                }
            }
            (String::from("discrete"), tau * (1.0 - pmf.total_atom_mass) / denom)
        }
    };
    let total_atom_mass = weights.iter().sum();
    Ok(CovariateMeasure {
        atoms,
        weights,
        total_atom_mass,
        source: MeasureSource::DpPredictive {
            tau,
            base: label,
            n,
            continuous_mass,
        },
    })
}

/// True when every required point has positive weight.
pub fn check_support(w: &CovariateMeasure, required: &Points) -> bool {
    required.iter().all(|x| w.weight_of(x) > 0.0)
}

fn check_distinct(pts: &Points) -> Result<()> {
    for i in 1..pts.len() {
        if (0..i).any(|j| pts.row(j) == pts.row(i)) {
            return Err(Error::DuplicateAtoms(i));
        }
    }
    Ok(())
}
