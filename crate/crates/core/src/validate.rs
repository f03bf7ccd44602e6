//! Self-contained numerical checks of the core kernels.
//!
//! Each check draws its own random instances from a seeded generator and
//! reports the worst deviation it saw.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::badvamp::{bg_denoise, bg_denoise_divergence, lmmse_column, BgPrior, LmmseOperator};
use crate::channel::{array_response, recondition, UpaGeometry};
use crate::completion::hard_threshold_rank;
use crate::linalg::{c, condition_number, crandn_matrix, frob_sq, singular_values, CMat, CVec};

pub const DIVERGENCE_TOL: f64 = 1e-4;
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, worst: f64, tol: f64, cases: usize) -> Self {
        CheckOutcome {
            name,
            passed: worst.is_finite() && worst <= tol,
            detail: format!("worst {worst:.3e} (tol {tol:.0e}) over {cases} cases"),
        }
    }
}

/// Runs every check and returns one outcome per check.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        denoiser_divergence(&mut rng),
        lmmse_stationarity(&mut rng),
        array_response_norm(&mut rng),
        recondition_constraints(&mut rng),
        eckart_young(&mut rng),
    ]
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

fn fd_divergence(r: Complex64, gamma: f64, p: &BgPrior, h: f64) -> f64 {
    let f = |z: Complex64| bg_denoise(&[z], gamma, p).map(|v| v[0]).unwrap_or(Complex64::new(f64::NAN, 0.0));
    let dx = (f(r + c(h, 0.0)) - f(r - c(h, 0.0))) / (2.0 * h);
    let dy = (f(r + c(0.0, h)) - f(r - c(0.0, h))) / (2.0 * h);
    (0.5 * (dx - c(0.0, 1.0) * dy)).re
}

fn denoiser_divergence(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &rho in &[0.05, 0.25, 0.5, 0.9, 1.0] {
        for &v in &[0.25, 1.0, 4.0] {
            for &gamma in &[0.5, 4.0, 50.0] {
                let p = BgPrior::new(rho, v);
                let mut pts = vec![c(0.0, 0.0), c(1.0, 0.0), c(-0.3, 0.7)];
                for _ in 0..4 {
                    pts.push(c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
                }
                for r in pts {
                    let d = match bg_denoise_divergence(&[r], gamma, &p) {
                        Ok(d) => d,
                        Err(_) => f64::NAN,
                    };
                    let err = (d - fd_divergence(r, gamma, &p, 1e-5)).abs();
                    worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
                    cases += 1;
                }
            }
        }
    }
    CheckOutcome::new("denoiser divergence vs finite differences", worst, DIVERGENCE_TOL, cases)
}

fn lmmse_stationarity(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &(m, l) in &[(8, 4), (32, 16), (16, 32), (64, 64)] {
        for &gamma in &[1e-3, 1.0, 1e3] {
            let h = crandn_matrix(rng, m, l, 1.0);
            let y = crandn_matrix(rng, m, 3, 1.0);
            let r2 = crandn_matrix(rng, l, 3, 1.0);
            let op = LmmseOperator::new(&h, &vec![1.0; m]);
            let block = op.as_ref().ok().map(|op| op.apply(&y, &r2, &[gamma; 3]));
            let a = CMat::identity(l, l) * c(gamma, 0.0) + h.adjoint() * &h;
            for j in 0..3 {
                let yj: CVec = y.column(j).into_owned();
                let rj: CVec = r2.column(j).into_owned();
                let scale = (&rj * c(gamma, 0.0) + h.adjoint() * &yj).norm().max(1e-300);
                let dense = lmmse_column(&h, &yj, &rj, gamma).map(|(_, d)| d);
                let blockwise = block.as_ref().map(|b| b.d2.column(j).into_owned());
                for d2 in [dense.ok(), blockwise] {
                    let rel = match d2 {
                        Some(d2) => (&a * d2 - &rj * c(gamma, 0.0) - h.adjoint() * &yj).norm() / scale,
                        None => f64::NAN,
                    };
                    worst = if rel.is_nan() { f64::NAN } else { worst.max(rel) };
                    cases += 1;
                }
            }
        }
    }
    CheckOutcome::new("LMMSE stationarity residual", worst, STATIONARITY_TOL, cases)
}

fn array_response_norm(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &(w, h, d) in &[(1, 1, 0.5), (8, 4, 0.5), (6, 6, 4.0), (16, 16, 0.5), (5, 3, 1.7)] {
        let g = match UpaGeometry::new(w, h, d) {
            Ok(g) => g,
            Err(_) => return CheckOutcome::new("unit-norm array responses", f64::NAN, 1e-12, cases),
        };
        for _ in 0..50 {
            let az = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let el = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let err = match array_response(&g, az, el) {
                Ok(a) => (a.norm() - 1.0).abs(),
                Err(_) => f64::NAN,
            };
            worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
            cases += 1;
        }
    }
    CheckOutcome::new("unit-norm array responses", worst, 1e-12, cases)
}

fn recondition_constraints(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &(r, cl) in &[(4, 4), (32, 16), (16, 32), (64, 64)] {
        for &kappa in &[1.0, 10.0, 100.0, 1000.0] {
            let a = crandn_matrix(rng, r, cl, 1.0);
            let err = match recondition(&a, kappa) {
                Ok(b) => {
                    let target = (r * cl) as f64;
                    let fro = (frob_sq(&b) - target).abs() / target;
                    let cond = (condition_number(&b) - kappa).abs() / kappa;
                    fro.max(cond)
                }
                Err(_) => f64::NAN,
            };
            worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
            cases += 1;
        }
    }
    CheckOutcome::new("recondition Frobenius and condition constraints", worst, 1e-8, cases)
}

fn eckart_young(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &(r, cl, k) in &[(8, 6, 3), (16, 16, 1), (32, 20, 5), (10, 40, 9)] {
        let a = crandn_matrix(rng, r, cl, 1.0);
        let sv = singular_values(&a);
        let tail: f64 = sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let got = (&a - hard_threshold_rank(&a, k)).norm();
        worst = worst.max((got - tail).abs() / tail);
        cases += 1;
    }
    CheckOutcome::new("Eckart-Young rank truncation", worst, 1e-9, cases)
}
