//! Stage one: direct-channel pilots with the surface switched off.

use rand::Rng;

use crate::error::{check_shape, invalid, Result};
use crate::linalg::{c, crandn_matrix, solve_right_hpd, CMat};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Observation {
    /// M x T_d
    pub y_a: CMat,
    pub noise_var: f64,
}

/// `Y_a = Z^T X_a + N_a` where `z` is the stored N x M direct channel.
pub fn simulate_stage1<R: Rng + ?Sized>(
    rng: &mut R,
    z: &CMat,
    x_a: &CMat,
    noise_var: f64,
) -> Result<Stage1Observation> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(invalid("noise variance must be non-negative"));
    }
    check_shape("stage-1 pilots", (x_a.nrows(), 1), (z.nrows(), 1))?;
    let mut y_a = z.transpose() * x_a;
    if noise_var > 0.0 {
        y_a += crandn_matrix(rng, y_a.nrows(), y_a.ncols(), noise_var);
    }
    Ok(Stage1Observation { y_a, noise_var })
}

/// Regularized linear estimate of the M x N uplink direct channel.
///
/// Evaluated as `Y X^H (X X^H + s I_N)^-1`, which equals
/// `Y (X^H X + s I_T)^-1 X^H` but only needs an N x N solve and stays
/// defined at `s = 0` when `X` has full row rank.
pub fn rmmse_estimate(y_a: &CMat, x_a: &CMat, noise_var: f64) -> Result<CMat> {
    check_shape("rmmse", (y_a.ncols(), 1), (x_a.ncols(), 1))?;
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(invalid("noise variance must be non-negative"));
    }
    let n = x_a.nrows();
    let gram = x_a * x_a.adjoint() + CMat::identity(n, n) * c(noise_var, 0.0);
    solve_right_hpd(&(y_a * x_a.adjoint()), &gram, "rmmse gram")
}

/// Residual error variance of the stage-1 estimate, treated as extra noise
/// in stage two.
pub fn stage2_error_variance(noise_var: f64, antennas: usize, power: f64) -> f64 {
    let a = noise_var * antennas as f64;
    a / (power + a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_sq, nmse_db};
    use crate::training::dft_training;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Literal T x T form, used as an oracle.
    fn rmmse_literal(y: &CMat, x: &CMat, s: f64) -> CMat {
        let t = x.ncols();
        let g = x.adjoint() * x + CMat::identity(t, t) * c(s, 0.0);
        y * g.try_inverse().unwrap() * x.adjoint()
    }

    #[test]
    fn noiseless_square_dft_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = crandn_matrix(&mut rng, 8, 6, 1.0);
        let x = dft_training(8, 8, 1.0).unwrap().x;
        let obs = simulate_stage1(&mut rng, &z, &x, 0.0).unwrap();
        assert_eq!(obs.y_a, z.transpose() * &x);
        let zh = rmmse_estimate(&obs.y_a, &x, 0.0).unwrap();
        assert!(nmse_db(&z.transpose(), &zh) < -200.0);
    }

    #[test]
    fn scalar_case_halves() {
        let y = CMat::from_element(1, 1, c(3.0, -1.0));
        let x = CMat::from_element(1, 1, c(1.0, 0.0));
        let z = rmmse_estimate(&y, &x, 1.0).unwrap();
        assert!((z[(0, 0)] - c(1.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn push_through_matches_literal_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = crandn_matrix(&mut rng, 4, 7, 1.0);
        let y = crandn_matrix(&mut rng, 5, 7, 1.0);
        let a = rmmse_estimate(&y, &x, 0.3).unwrap();
        let b = rmmse_literal(&y, &x, 0.3);
        assert!(frob_sq(&(a - b)) < 1e-24);
    }

    #[test]
    fn noise_variance_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = CMat::zeros(4, 100);
        let x = CMat::identity(4, 100);
        let obs = simulate_stage1(&mut rng, &z, &x, 0.7).unwrap();
        let v = frob_sq(&obs.y_a) / 10_000.0;
        assert!((v / 0.7 - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn empirical_mse_matches_closed_form() {
        let (n, m, t_d, p) = (8, 8, 8, 1.0);
        let s = 0.1;
        let x = dft_training(n, t_d, p).unwrap().x;
        let a = p / n as f64;
        // X X^H = a I, so the estimate is Z a/(a+s) + N X^H/(a+s).
        let bias = (s / (a + s)).powi(2);
        let noise = s * a / (a + s).powi(2);
        let want = bias + noise;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 500;
        let mut err = 0.0;
        let mut energy = 0.0;
        for _ in 0..trials {
            let z = crandn_matrix(&mut rng, n, m, 1.0);
            let obs = simulate_stage1(&mut rng, &z, &x, s).unwrap();
            let zh = rmmse_estimate(&obs.y_a, &x, s).unwrap();
            err += frob_sq(&(z.transpose() - zh));
            energy += frob_sq(&z);
        }
        let got = err / energy;
        assert!((got / want - 1.0).abs() < 0.05, "got {got} want {want}");
    }

    #[test]
    fn error_variance_arithmetic() {
        assert_eq!(stage2_error_variance(0.0, 64, 1.0), 0.0);
        assert_eq!(stage2_error_variance(1.0, 1, 1.0), 0.5);
        assert!((stage2_error_variance(0.1, 64, 1.0) - 6.4 / 7.4).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = CMat::zeros(3, 2);
        let x = CMat::zeros(4, 4);
        assert!(simulate_stage1(&mut rng, &z, &x, 0.0).is_err());
    }
}
