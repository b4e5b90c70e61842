//! Full Bayesian Significance Test (FBST) for the adequacy of linear models
//! under a Gaussian process prior on the regression function.
//!
//! The crate is `no_std` with `alloc`; enable the `std` feature to get
//! `std::error::Error` on [`Error`].
//!
//! Layout:
//!
//! - [`numerics`]: dense symmetric linear algebra, root finding, chi-squared
//!   special functions.
//! - [`gp`]: kernels, the conjugate posterior on a finite grid, sample paths,
//!   and the repeated-row collapse of the data.
//! - [`gchi2`]: the generalized chi-squared law of the weighted residual sum of
//!   squares, with characteristic-function inversion and a Monte Carlo oracle.
//! - [`hypothesis`]: linear bases, projection matrices and the L² projection
//!   onto the linear-model set.
//! - [`measure`]: covariate measures (finite uniform, Dirichlet-process
//!   predictive atoms).
//! - [`fbst`]: the four test procedures and the ellipsoid-intersection engine.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod fbst;
pub mod gchi2;
pub mod gp;
pub mod hypothesis;
pub mod measure;
pub mod numerics;

pub use error::{Error, Result};
pub use fbst::{FbstOutcome, Method, PragmaticSpec};
pub use gchi2::QuadFormDist;
pub use gp::{CollapsedData, GpPosterior, GpPrior, Kernel, KernelKind, MeanFn, Points};
pub use hypothesis::{LinearBasis, ProjectionKind, ProjectionPair};
pub use measure::{BaseMeasure, CovariateMeasure, MeasureSource};
pub use numerics::{EigenDecomp, Matrix, SymMatrix};
