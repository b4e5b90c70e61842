//! Dense symmetric linear algebra, scalar root finding and chi-squared
//! special functions shared by the rest of the crate.
//!
//! All routines are pure functions of their inputs.

mod linalg;
mod matrix;
mod root;
mod special;

pub use linalg::{
    cholesky, cholesky_jittered, pinv, psd_sqrt_factor, solve_spd, solve_spd_vec, spd_inverse,
    sym_eigen, Cholesky, EigenDecomp, JITTER_BASE, JITTER_ESCALATIONS, PINV_RTOL,
};
pub(crate) use linalg::diag_sqrt;
pub use matrix::{dot, norm, Matrix, SymMatrix};
pub use root::{find_root, golden_section_min, ROOT_TOL};
pub use special::{chi2_cdf, chi2_quantile, chi2_sf, gamma_p, gamma_q};
