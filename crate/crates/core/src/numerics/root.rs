use crate::error::{Error, Result};

/// Default absolute tolerance for [`find_root`].
pub const ROOT_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 400;

/// Bisection root finder for a continuous `f` with `f(lo)·f(hi) ≤ 0`.
///
/// Stops when `|f(x)| ≤ tol` or the bracket is narrower than `tol`.
pub fn find_root(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi, f_lo, f_hi });
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() <= tol || hi - lo <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimizes a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_quadratic_roots() {
        let r = find_root(|x| x - 1.0, 0.0, 2.0, ROOT_TOL).unwrap();
        assert!((r - 1.0).abs() <= ROOT_TOL);
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, ROOT_TOL).unwrap();
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn normal_quantile_by_inversion() {
        let cdf = |x: f64| 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2);
        let q = find_root(|x| cdf(x) - 0.95, 0.0, 5.0, ROOT_TOL).unwrap();
        assert!((q - 1.6449).abs() < 1e-4);
    }

    #[test]
    fn unbracketed_root_is_an_error() {
        let e = find_root(|x| x * x + 1.0, -1.0, 1.0, ROOT_TOL).unwrap_err();
        assert!(matches!(e, Error::NoBracket { .. }));
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section_min(|x| (x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }
}
