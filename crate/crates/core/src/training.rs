//! Pilot matrices and the sparse ON/OFF surface schedule.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, crandn_matrix, frob_sq, numerical_rank, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingStage {
    Direct,
    Lis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    /// N x T pilot symbols.
    pub x: CMat,
    /// Total energy, equal to the squared Frobenius norm of `x`.
    pub power: f64,
    pub stage: TrainingStage,
}

/// DFT pilots with orthogonal rows: `X X^H = (p / N) I`.
pub fn dft_training(n: usize, t_d: usize, power: f64) -> Result<TrainingMatrix> {
    if n == 0 || t_d < n {
        return Err(invalid(format!("DFT training needs 1 <= N <= T_d, got N={n}, T_d={t_d}")));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(invalid("training power must be positive"));
    }
    let amp = (power / (t_d as f64 * n as f64)).sqrt();
    let x = CMat::from_fn(n, t_d, |m, t| {
        // Reduce the exponent modulo T_d so large indices keep full precision.
        let k = (m * t) % t_d;
        Complex64::from_polar(amp, 2.0 * PI * k as f64 / t_d as f64)
    });
    Ok(TrainingMatrix {
        x,
        power,
        stage: TrainingStage::Direct,
    })
}

const RANK_RETRIES: usize = 16;

/// Gaussian pilots normalized to total energy `power`, redrawn while rank
/// deficient.
pub fn random_training<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    t_r: usize,
    power: f64,
) -> Result<TrainingMatrix> {
    if n == 0 || t_r < n {
        return Err(invalid(format!("random training needs 1 <= N <= T_r, got N={n}, T_r={t_r}")));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(invalid("training power must be positive"));
    }
    for _ in 0..RANK_RETRIES {
        let mut x = crandn_matrix(rng, n, t_r, 1.0);
        let e = frob_sq(&x);
        x *= c((power / e).sqrt(), 0.0);
        if numerical_rank(&x, 1e-10) == n {
            return Ok(TrainingMatrix {
                x,
                power,
                stage: TrainingStage::Lis,
            });
        }
    }
    Err(Error::RetriesExhausted {
        what: "full-rank random training",
        attempts: RANK_RETRIES,
    })
}

/// 0/1 schedule: column t lists the surface elements switched ON at use t.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    /// L x T_r, entries exactly 0.0 or 1.0.
    pub s: DMatrix<f64>,
    pub per_column_support: Vec<Vec<usize>>,
    pub sparsity_rate: f64,
}

/// Number of ON elements per column for rate `rho` over `l` elements.
pub fn elements_on(l: usize, rho: f64) -> usize {
    // The small slack keeps products such as 0.1 * 70 from rounding up.
    (rho * l as f64 - 1e-9).ceil().max(0.0) as usize
}

impl PhaseSchedule {
    /// Builds a schedule from an explicit 0/1 matrix.
    pub fn from_matrix(s: DMatrix<f64>) -> Result<Self> {
        if s.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(invalid("schedule entries must be 0 or 1"));
        }
        let per_column_support: Vec<Vec<usize>> = (0..s.ncols())
            .map(|t| (0..s.nrows()).filter(|&l| s[(l, t)] == 1.0).collect())
            .collect();
        let on: usize = per_column_support.iter().map(Vec::len).sum();
        let total = s.nrows() * s.ncols();
        let sparsity_rate = if total == 0 { 0.0 } else { on as f64 / total as f64 };
        Ok(PhaseSchedule {
            s,
            per_column_support,
            sparsity_rate,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.s.nrows()
    }

    pub fn num_uses(&self) -> usize {
        self.s.ncols()
    }

    /// Elementwise product `S ⊙ A`.
    pub fn apply(&self, a: &CMat) -> CMat {
        assert_eq!(a.shape(), self.s.shape(), "schedule shape mismatch");
        a.zip_map(&self.s, |z, s| z * s)
    }

    pub fn rows_distinct(&self) -> bool {
        rows_distinct(&self.s)
    }

    /// Row-reordered copy: row `perm[n]` of the result is row `n` of `self`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Self> {
        let l = self.num_elements();
        if perm.len() != l {
            return Err(invalid("permutation length mismatch"));
        }
        let mut s = DMatrix::zeros(l, self.num_uses());
        for (n, &p) in perm.iter().enumerate() {
            s.set_row(p, &self.s.row(n));
        }
        let mut out = Self::from_matrix(s)?;
        out.sparsity_rate = self.sparsity_rate;
        Ok(out)
    }
}

pub(crate) fn rows_distinct(s: &DMatrix<f64>) -> bool {
    let mut seen = HashSet::with_capacity(s.nrows());
    (0..s.nrows()).all(|l| {
        let key: Vec<bool> = s.row(l).iter().map(|&v| v != 0.0).collect();
        seen.insert(key)
    })
}

const SCHEDULE_RETRIES: usize = 64;

/// Draws a schedule with `ceil(rho * L)` ON elements per column, chosen
/// uniformly without replacement, with pairwise distinct rows.
pub fn sparse_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    l: usize,
    t_r: usize,
    rho: f64,
) -> Result<PhaseSchedule> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(invalid(format!("sparsity rate must lie in (0, 1], got {rho}")));
    }
    let k = elements_on(l, rho);
    if k == 0 {
        return Err(invalid("schedule would switch on zero elements"));
    }
    for _ in 0..SCHEDULE_RETRIES {
        let mut s = DMatrix::zeros(l, t_r);
        let mut support = Vec::with_capacity(t_r);
        for t in 0..t_r {
            let mut idx = sample(rng, l, k).into_vec();
            idx.sort_unstable();
            for &i in &idx {
                s[(i, t)] = 1.0;
            }
            support.push(idx);
        }
        // With every element always ON the rows coincide by construction.
        if k == l || rows_distinct(&s) {
            return Ok(PhaseSchedule {
                s,
                per_column_support: support,
                sparsity_rate: rho,
            });
        }
    }
    Err(Error::RetriesExhausted {
        what: "schedule with distinct rows",
        attempts: SCHEDULE_RETRIES,
    })
}
