//! Brute-force reference solutions used to cross-check the closed forms.
#![allow(dead_code)]

use fbst_core::numerics::{cholesky, sym_eigen};
use fbst_core::{Matrix, SymMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

/// `min_β Σ pᵢ (hᵢ − bᵢ'β)²` for `k ≤ 2` by repeatedly zooming a dense grid.
pub fn beta_grid_min(h: &[f64], design: &Matrix, p: &[f64]) -> f64 {
    let k = design.cols();
    assert!(k == 1 || k == 2, "grid oracle supports k ≤ 2");
    let loss = |beta: &[f64]| -> f64 {
        (0..h.len())
            .map(|i| {
                let fit: f64 = (0..k).map(|j| design[(i, j)] * beta[j]).sum();
                p[i] * (h[i] - fit).powi(2)
            })
            .sum()
    };
    let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut center = vec![0.0; k];
    let mut half = 100.0 * scale;
    let steps = 200i32;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let mut arg = center.clone();
        let offsets: Vec<f64> = (-steps..=steps).map(|s| half * s as f64 / steps as f64).collect();
        if k == 1 {
            for &a in &offsets {
                let b = [center[0] + a];
                let v = loss(&b);
                if v < best {
                    best = v;
                    arg = b.to_vec();
                }
            }
        } else {
            for &a in &offsets {
                for &c in &offsets {
                    let b = [center[0] + a, center[1] + c];
                    let v = loss(&b);
                    if v < best {
                        best = v;
                        arg = b.to_vec();
                    }
                }
            }
        }
        center = arg;
        half *= 4.0 / steps as f64;
        if half < 1e-13 * scale {
            break;
        }
    }
    best
}

/// `min (h − μ)'Q⁻¹(h − μ)` over `h'Nh ≤ ε²` by random search over the
/// boundary `h'Nh = ε²` followed by shrinking random perturbations.
///
/// `h` is split into a range part `u` with `u'Nu = ε²` and a null-space part
/// that is optimized exactly for each `u`.
pub fn qcqp_random_search(
    center: &[f64],
    q: &SymMatrix,
    n_mat: &SymMatrix,
    eps2: f64,
    candidates: usize,
    rng: &mut impl Rng,
) -> f64 {
    let dim = center.len();
    let qinv = cholesky(q).unwrap().inverse();
    let mahal = |h: &[f64]| -> f64 {
        let d: Vec<f64> = h.iter().zip(center).map(|(a, b)| a - b).collect();
        qinv.quad_form(&d).unwrap()
    };
    if n_mat.quad_form(center).unwrap() <= eps2 {
        return 0.0;
    }
    let e = sym_eigen(n_mat).unwrap();
    let tol = 1e-10 * e.values[0].max(f64::MIN_POSITIVE);
    let range: Vec<usize> = (0..dim).filter(|&i| e.values[i] > tol).collect();
    let null: Vec<usize> = (0..dim).filter(|&i| e.values[i] <= tol).collect();
    let r = range.len();

    // null-space block: z = (V'Q⁻¹V)⁻¹ V'Q⁻¹ (μ − u)
    let vn = Matrix::from_fn(dim, null.len(), |i, j| e.vectors[(i, null[j])]);
    let qv = qinv.as_matrix().matmul(&vn).unwrap();
    let gram = if null.is_empty() {
        None
    } else {
        Some(cholesky(&SymMatrix::symmetrize(&vn.transpose().matmul(&qv).unwrap())).unwrap())
    };
    let value_of = |dir: &[f64]| -> f64 {
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut u = vec![0.0; dim];
        for (a, &idx) in range.iter().enumerate() {
            let coef = eps2.sqrt() * dir[a] / norm / e.values[idx].sqrt();
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += coef * e.vectors[(i, idx)];
            }
        }
        if let Some(g) = &gram {
            let diff: Vec<f64> = center.iter().zip(&u).map(|(m, x)| m - x).collect();
            let z = g.solve_vec(&qv.tr_matvec(&diff).unwrap()).unwrap();
            let shift = vn.matvec(&z).unwrap();
            for (ui, s) in u.iter_mut().zip(shift) {
                *ui += s;
            }
        }
        mahal(&u)
    };

    let mut best_dir: Vec<f64> = vec![1.0; r];
    let mut best = value_of(&best_dir);
    for _ in 0..candidates {
        let d: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
        let v = value_of(&d);
        if v < best {
            best = v;
            best_dir = d;
        }
    }
    let mut step = 0.1;
    while step > 1e-9 {
        let mut improved = false;
        for _ in 0..200 {
            let norm = best_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d: Vec<f64> = best_dir
                .iter()
                .map(|v| v / norm + step * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let v = value_of(&d);
            if v < best {
                best = v;
                best_dir = d;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}
