//! Measurement-error tolerance for radii recovered through Stokes' law,
//! `radius = √(K_s V)`, when the terminal velocity `V` is replaced by a
//! measured mean velocity with known error bounds.

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StokesParams {
    /// Maximum error of the mean-velocity estimate.
    pub delta: f64,
    /// Maximum error from using the mean velocity for the terminal one.
    pub eta: f64,
    pub ks: f64,
}

impl Default for StokesParams {
    fn default() -> Self {
        Self {
            delta: 0.14,
            eta: 0.3555,
            ks: 8.446,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesThreshold {
    /// Sup-norm bound on `|g(t) − y(t)|`.
    pub eps_inf: f64,
    /// Corresponding L² tolerance `eps_inf / √n`.
    pub eps_l2: f64,
    pub n: usize,
}

/// Largest radius error over the records when the velocity may be off by
/// `±(δ + η)`, and its L² counterpart over `n` points.
pub fn stokes_threshold(
    t: &[f64],
    v_mean: &[f64],
    radius: &[f64],
    params: &StokesParams,
    n: usize,
) -> Result<StokesThreshold> {
    if v_mean.len() != radius.len() || t.len() != radius.len() {
        return Err(CliError::Data(format!(
            "stokes bound needs matching columns, got {} times, {} velocities, {} radii",
            t.len(),
            v_mean.len(),
            radius.len()
        )));
    }
    if v_mean.is_empty() {
        return Err(CliError::EmptyDataset);
    }
    if n == 0 {
        return Err(CliError::Config("stokes n must be positive".into()));
    }
    let slack = params.delta + params.eta;
    let mut eps_inf = 0.0f64;
    for ((&ti, &v), &y) in t.iter().zip(v_mean).zip(radius) {
        let low = v - slack;
        if low < 0.0 {
            return Err(CliError::NegativeRadicand { t: ti });
        }
        let lo = (params.ks * low).sqrt() - y;
        let hi = (params.ks * (v + slack)).sqrt() - y;
        eps_inf = eps_inf.max(lo.abs()).max(hi.abs());
    }
    Ok(StokesThreshold {
        eps_inf,
        eps_l2: eps_inf / (n as f64).sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_radii_without_error_give_zero() {
        let p = StokesParams {
            delta: 0.0,
            eta: 0.0,
            ks: 8.446,
        };
        let v = [2.0, 3.0, 4.5];
        let y: Vec<f64> = v.iter().map(|v: &f64| (8.446 * v).sqrt()).collect();
        let s = stokes_threshold(&[0.5, 1.0, 1.5], &v, &y, &p, 3).unwrap();
        assert_eq!(s.eps_inf, 0.0);
        assert_eq!(s.eps_l2, 0.0);
    }

    #[test]
    fn single_record_hand_value() {
        let p = StokesParams {
            delta: 0.1,
            eta: 0.11,
            ks: 8.446,
        };
        let y = 8.446f64.sqrt();
        let s = stokes_threshold(&[1.0], &[1.0], &[y], &p, 1).unwrap();
        // √(8.446·1.21) − √8.446 = 0.1·√8.446, √8.446 − √(8.446·0.79) is larger
        let up = 1.1 * y - y;
        let down = y - (8.446f64 * 0.79).sqrt();
        assert!((s.eps_inf - up.max(down)).abs() < 1e-12);
        assert!((s.eps_inf - 0.323_113).abs() < 1e-5);
    }

    #[test]
    fn l2_scaling_and_radicand_guard() {
        let p = StokesParams::default();
        let s = stokes_threshold(&[0.0], &[2.0], &[4.0], &p, 15).unwrap();
        assert!((s.eps_l2 * 15f64.sqrt() - s.eps_inf).abs() < 1e-12);
        assert!(matches!(
            stokes_threshold(&[0.0, 3.5], &[2.0, 0.3], &[4.0, 1.6], &p, 2),
            Err(CliError::NegativeRadicand { t }) if t == 3.5
        ));
    }
}
