use rand::Rng;

use crate::channel::ChannelTriple;
use crate::error::{check_shape, invalid, Result};
use crate::linalg::{crandn_matrix, CMat};
use crate::training::PhaseSchedule;

/// Noiseless surface contribution `D = S ⊙ (G X_b)`.
pub fn sparse_codes(g: &CMat, schedule: &PhaseSchedule, x_b: &CMat) -> CMat {
    schedule.apply(&(g * x_b))
}

/// Stage-two measurements after the AP removes its direct-channel estimate.
///
/// With `z_hat = Some(Ẑ)` (the M x N uplink estimate) the leftover direct
/// term `(Z^T - Ẑ) X_b` is simulated explicitly and only thermal noise of
/// variance `noise_var` is added. With `None`, the leftover is modelled as
/// extra white noise and the total variance is `noise_var + err_var`.
pub fn simulate_stage2<R: Rng + ?Sized>(
    rng: &mut R,
    triple: &ChannelTriple,
    schedule: &PhaseSchedule,
    x_b: &CMat,
    z_hat: Option<&CMat>,
    noise_var: f64,
    err_var: f64,
) -> Result<CMat> {
    let (m, n, l) = triple.dims();
    check_shape("stage-2 pilots", (x_b.nrows(), x_b.ncols()), (n, schedule.num_uses()))?;
    check_shape("stage-2 schedule", (schedule.num_elements(), 1), (l, 1))?;
    if !(noise_var >= 0.0 && err_var >= 0.0) {
        return Err(invalid("variances must be non-negative"));
    }
    let mut y = &triple.h * sparse_codes(&triple.g, schedule, x_b);
    let white = match z_hat {
        Some(zh) => {
            check_shape("direct estimate", zh.shape(), (m, n))?;
            y += (triple.direct_uplink() - zh) * x_b;
            noise_var
        }
        None => noise_var + err_var,
    };
    if white > 0.0 {
        y += crandn_matrix(rng, m, x_b.ncols(), white);
    }
    Ok(y)
}
