//! Low-rank completion of the user-side channel by normalized iterative
//! hard thresholding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, invalid, Result};
use crate::linalg::{c, frob_sq, hermitian_eigen, solve_right_hpd, svd, CMat};

/// Best rank-`r` approximation in Frobenius norm.
pub fn hard_threshold_rank(q: &CMat, r: usize) -> CMat {
    let d = svd(q);
    let k = r.min(d.singular_values.len());
    let mut us = d.u.columns(0, k).into_owned();
    for j in 0..k {
        let mut col = us.column_mut(j);
        col *= c(d.singular_values[j], 0.0);
    }
    us * d.v.columns(0, k).adjoint()
}

/// Top-`r` left singular vectors and the rank-`r` truncation of `q`,
/// computed through the eigenvectors of `q q^H` (cheap when rows << cols).
fn truncate(q: &CMat, r: usize) -> (CMat, CMat) {
    let e = hermitian_eigen(&(q * q.adjoint()));
    let u = e.vectors.columns(0, r.min(q.nrows())).into_owned();
    let f = &u * (u.adjoint() * q);
    (u, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NihtConfig {
    pub max_iter: usize,
    /// Stop once the relative masked residual drops below this.
    pub residual_tol: f64,
    /// Stop once the residual changes by less than this (relative) over
    /// `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
}

impl Default for NihtConfig {
    fn default() -> Self {
        NihtConfig {
            max_iter: 500,
            residual_tol: 1e-10,
            stall_tol: 1e-8,
            stall_window: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionProblem<'a> {
    /// L x T_r, permutation-corrected surface codes.
    pub d_check: &'a CMat,
    /// L x T_r, 0/1.
    pub mask: &'a DMatrix<f64>,
    /// N x T_r
    pub x_b: &'a CMat,
    pub rank: usize,
    pub config: NihtConfig,
}

#[derive(Debug, Clone)]
pub struct NihtOutput {
    /// L x N
    pub g: CMat,
    /// Completed L x T_r matrix.
    pub f: CMat,
    pub iterations: usize,
    /// Relative masked residual per iteration, starting with the
    /// initialization.
    pub residual_history: Vec<f64>,
}

fn masked(mask: &DMatrix<f64>, a: &CMat) -> CMat {
    a.zip_map(mask, |z, s| z * s)
}

const MAX_BACKTRACK: usize = 30;

/// Recovers the rank-`r` factor `G` from masked samples of `G X_b`.
pub fn niht(problem: &CompletionProblem<'_>) -> Result<NihtOutput> {
    let d = problem.d_check;
    let (l, t) = d.shape();
    check_shape("niht mask", problem.mask.shape(), (l, t))?;
    check_shape("niht pilots", (problem.x_b.ncols(), 1), (t, 1))?;
    let r = problem.rank;
    if r == 0 || r > l.min(t) {
        return Err(invalid(format!("rank {r} outside [1, {}]", l.min(t))));
    }
    let cfg = problem.config;
    let mask = problem.mask;

    let observed = masked(mask, d);
    let scale = frob_sq(&observed).sqrt();
    let rel = |f: &CMat| -> f64 {
        if scale > 0.0 {
            frob_sq(&masked(mask, &(d - f))).sqrt() / scale
        } else {
            0.0
        }
    };

    let (mut u, mut f) = truncate(&observed, r);
    let mut res = rel(&f);
    let mut history = vec![res];
    let mut iterations = 0;
    while iterations < cfg.max_iter && res >= cfg.residual_tol {
        let grad = masked(mask, &(d - &f));
        let proj = &u * (u.adjoint() * &grad);
        let den = frob_sq(&masked(mask, &proj));
        if den <= 0.0 {
            break;
        }
        let mut alpha = frob_sq(&proj) / den;
        // Halve the step until the masked residual does not grow.
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let q = &f + &grad * c(alpha, 0.0);
            let (u_new, f_new) = truncate(&q, r);
            let res_new = rel(&f_new);
            if res_new <= res {
                accepted = Some((u_new, f_new, res_new));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((u_new, f_new, res_new)) = accepted else {
            break;
        };
        u = u_new;
        f = f_new;
        res = res_new;
        history.push(res);
        let w = cfg.stall_window;
        if history.len() > w {
            let past = history[history.len() - 1 - w];
            if past > 0.0 && (past - res).abs() / past < cfg.stall_tol {
                break;
            }
        }
    }

    let x = problem.x_b;
    let g = solve_right_hpd(&(&f * x.adjoint()), &(x * x.adjoint()), "pilot gram")?;
    Ok(NihtOutput {
        g,
        f,
        iterations,
        residual_history: history,
    })
}

/// Whether `observed` samples meet the `r (L + T - r)` degrees-of-freedom
/// count of a rank-`r` L x T matrix.
pub fn enough_measurements(observed: usize, l: usize, t: usize, r: usize) -> bool {
    observed >= r * (l + t - r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crandn_matrix, numerical_rank, singular_values, CVec};
    use crate::training::random_training;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_rank_input_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = crandn_matrix(&mut rng, 6, 2, 1.0) * crandn_matrix(&mut rng, 2, 5, 1.0);
        let h = hard_threshold_rank(&q, 3);
        assert!(frob_sq(&(h - &q)) < 1e-20 * frob_sq(&q));
    }

    #[test]
    fn diagonal_truncation() {
        let q = CMat::from_diagonal(&CVec::from_vec(vec![c(3.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]));
        let want = CMat::from_diagonal(&CVec::from_vec(vec![c(3.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]));
        assert!(frob_sq(&(hard_threshold_rank(&q, 2) - want)) < 1e-24);
    }

    #[test]
    fn eckart_young() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = crandn_matrix(&mut rng, 8, 6, 1.0);
        let s = singular_values(&q);
        let err = frob_sq(&(hard_threshold_rank(&q, 3) - &q)).sqrt();
        let want = (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]).sqrt();
        assert!((err - want).abs() < 1e-10);
    }

    fn planted(seed: u64, l: usize, t: usize, n: usize, r: usize, density: f64) -> (CMat, CMat, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = crandn_matrix(&mut rng, l, r, 1.0) * crandn_matrix(&mut rng, r, n, 1.0);
        let x = random_training(&mut rng, n, t, t as f64).unwrap().x;
        let mask = DMatrix::from_fn(l, t, |_, _| if rng.random::<f64>() < density { 1.0 } else { 0.0 });
        (g, x, mask)
    }

    #[test]
    fn full_mask_is_exact() {
        let (g, x, _) = planted(3, 8, 30, 6, 2, 1.0);
        let mask = DMatrix::from_element(8, 30, 1.0);
        let d = &g * &x;
        let out = niht(&CompletionProblem { d_check: &d, mask: &mask, x_b: &x, rank: 2, config: NihtConfig::default() }).unwrap();
        assert!(frob_sq(&(&out.g - &g)) < 1e-16 * frob_sq(&g));
        assert!(out.residual_history[0] < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero() {
        let (_, x, mask) = planted(4, 8, 30, 6, 2, 0.5);
        let d = CMat::zeros(8, 30);
        let out = niht(&CompletionProblem { d_check: &d, mask: &mask, x_b: &x, rank: 2, config: NihtConfig::default() }).unwrap();
        assert!(out.g.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn planted_instance_recovers_with_monotone_residual() {
        let (l, t, n, r) = (16, 120, 8, 2);
        let (g, x, mask) = planted(5, l, t, n, r, 0.4);
        let d = mask.map(|v| c(v, 0.0)).component_mul(&(&g * &x));
        let out = niht(&CompletionProblem { d_check: &d, mask: &mask, x_b: &x, rank: r, config: NihtConfig::default() }).unwrap();
        let err = (frob_sq(&(&out.g - &g)) / frob_sq(&g)).sqrt();
        assert!(err < 1e-6, "relative error {err}");
        assert!(out.residual_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(numerical_rank(&out.f, 1e-10) <= r);
    }

    #[test]
    fn measurement_guard() {
        assert!(enough_measurements(768, 16, 120, 2));
        assert!(!enough_measurements(267, 16, 120, 2));
    }
}
