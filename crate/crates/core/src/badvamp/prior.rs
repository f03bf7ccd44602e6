//! Bernoulli-Gaussian prior and its MMSE denoiser.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Prior `(1 - sparsity) δ0 + sparsity CN(mean, variance)` on each entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgPrior {
    pub sparsity: f64,
    pub mean: Complex64,
    pub variance: f64,
}

impl BgPrior {
    pub fn new(sparsity: f64, variance: f64) -> Self {
        BgPrior {
            sparsity,
            mean: Complex64::new(0.0, 0.0),
            variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(invalid(format!("sparsity must lie in (0, 1], got {}", self.sparsity)));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(invalid(format!("prior variance must be positive, got {}", self.variance)));
        }
        if !(self.mean.re.is_finite() && self.mean.im.is_finite()) {
            return Err(invalid("prior mean must be finite"));
        }
        Ok(())
    }

    /// Per-entry second moment.
    pub fn second_moment(&self) -> f64 {
        self.sparsity * (self.mean.norm_sqr() + self.variance)
    }
}

/// Posterior of one column's entries at a fixed `gamma`, with the
/// entry-independent terms computed once.
pub(crate) struct ColumnPosterior {
    mean: Complex64,
    gain: f64,
    offset: Complex64,
    mv: f64,
    dense: bool,
    gamma: f64,
    inv_s_on: f64,
    bias: f64,
}

impl ColumnPosterior {
    pub(crate) fn new(gamma: f64, prior: &BgPrior) -> Self {
        let v = prior.variance;
        let s_on = v + 1.0 / gamma;
        let vg = v * gamma;
        let dense = prior.sparsity >= 1.0;
        // Log-odds of OFF against ON; the pi factors of the densities cancel.
        let bias = if dense {
            0.0
        } else {
            ((1.0 - prior.sparsity) / prior.sparsity).ln() + gamma.ln() + s_on.ln()
        };
        ColumnPosterior {
            mean: prior.mean,
            gain: vg / (1.0 + vg),
            offset: prior.mean / (1.0 + vg),
            mv: v / (1.0 + vg),
            dense,
            gamma,
            inv_s_on: 1.0 / s_on,
            bias,
        }
    }

    /// Posterior mean and variance of `d` given `r = d + CN(0, 1/gamma)`.
    #[inline]
    pub(crate) fn eval(&self, r: Complex64) -> (Complex64, f64) {
        let m = r * self.gain + self.offset;
        if self.dense {
            return (m, self.mv);
        }
        let x = self.bias - r.norm_sqr() * self.gamma + (r - self.mean).norm_sqr() * self.inv_s_on;
        let pi = 1.0 / (1.0 + x.clamp(-700.0, 700.0).exp());
        let d = m * pi;
        let var = pi * self.mv + pi * (1.0 - pi) * m.norm_sqr();
        (d, var)
    }
}

#[cfg(test)]
pub(crate) fn posterior(r: Complex64, gamma: f64, prior: &BgPrior) -> (Complex64, f64) {
    ColumnPosterior::new(gamma, prior).eval(r)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("gamma must be positive and finite, got {gamma}")))
    }
}

/// Elementwise posterior mean.
pub fn bg_denoise(r: &[Complex64], gamma: f64, prior: &BgPrior) -> Result<Vec<Complex64>> {
    check_gamma(gamma)?;
    let p = ColumnPosterior::new(gamma, prior);
    Ok(r.iter().map(|&x| p.eval(x).0).collect())
}

/// Mean Wirtinger derivative of the posterior mean, which for Gaussian
/// pseudo-measurements equals `gamma` times the mean posterior variance.
pub fn bg_denoise_divergence(r: &[Complex64], gamma: f64, prior: &BgPrior) -> Result<f64> {
    check_gamma(gamma)?;
    if r.is_empty() {
        return Ok(0.0);
    }
    let p = ColumnPosterior::new(gamma, prior);
    let total: f64 = r.iter().map(|&x| p.eval(x).1).sum();
    Ok(gamma * total / r.len() as f64)
}
