//! Permutation recovery from the known schedule and ambiguity-aware errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, invalid, Result};
use crate::linalg::{frob_sq, to_db_floored, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationSource {
    Recovered,
    GroundTruth,
}

/// `perm[n]` is the index in the reference ordering of estimated row `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    pub perm: Vec<usize>,
    pub source: PermutationSource,
    /// Estimated rows whose best score was zero.
    pub degenerate_rows: Vec<usize>,
}

impl PermutationMap {
    pub fn identity(l: usize) -> Self {
        PermutationMap {
            perm: (0..l).collect(),
            source: PermutationSource::GroundTruth,
            degenerate_rows: Vec::new(),
        }
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        self.perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (n, &p) in self.perm.iter().enumerate() {
            inv[p] = n;
        }
        inv
    }
}

/// Columnwise support estimate: 1 where `|D[l,t]| > tau_rel * max_l |D[l,t]|`.
pub fn state_matrix(d_hat: &CMat, tau_rel: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d_hat.nrows(), d_hat.ncols());
    for t in 0..d_hat.ncols() {
        let col = d_hat.column(t);
        let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        for (l, z) in col.iter().enumerate() {
            if z.norm() > tau_rel * peak {
                s[(l, t)] = 1.0;
            }
        }
    }
    s
}

/// Greedy bijection maximizing row inner products between the estimated
/// state matrix `s_bar` and the true schedule `s`.
pub fn recover_permutation(s: &DMatrix<f64>, s_bar: &DMatrix<f64>) -> Result<PermutationMap> {
    check_shape("permutation recovery", s_bar.shape(), s.shape())?;
    let l = s.nrows();
    let scores = s_bar * s.transpose();
    let mut pairs: Vec<(usize, usize)> = (0..l).flat_map(|n| (0..l).map(move |k| (n, k))).collect();
    // Stable sort keeps (estimated, reference) lexicographic order on ties.
    pairs.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut perm = vec![usize::MAX; l];
    let mut used = vec![false; l];
    let mut left = l;
    for (n, k) in pairs {
        if left == 0 {
            break;
        }
        if perm[n] == usize::MAX && !used[k] {
            perm[n] = k;
            used[k] = true;
            left -= 1;
        }
    }
    let degenerate_rows = (0..l)
        .filter(|&n| (0..l).all(|k| scores[(n, k)] <= 0.0))
        .collect();
    Ok(PermutationMap {
        perm,
        source: PermutationSource::Recovered,
        degenerate_rows,
    })
}

/// Reorders estimates into the reference ordering: row `perm[n]` of the
/// returned D is row `n` of `d_hat`, column `perm[n]` of the returned H is
/// column `n` of `h_hat`.
pub fn apply_permutation(h_hat: &CMat, d_hat: &CMat, p: &PermutationMap) -> Result<(CMat, CMat)> {
    let l = p.perm.len();
    check_shape("permute H", (h_hat.ncols(), 1), (l, 1))?;
    check_shape("permute D", (d_hat.nrows(), 1), (l, 1))?;
    if !p.is_bijection() {
        return Err(invalid("permutation is not a bijection"));
    }
    Ok((permute_columns(h_hat, &p.perm), permute_rows(d_hat, &p.perm)))
}

pub fn permute_columns(a: &CMat, perm: &[usize]) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols());
    for (n, &k) in perm.iter().enumerate() {
        out.set_column(k, &a.column(n));
    }
    out
}

pub fn permute_rows(a: &CMat, perm: &[usize]) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols());
    for (n, &k) in perm.iter().enumerate() {
        out.set_row(k, &a.row(n));
    }
    out
}

/// NMSE in dB of `h_hat` after reordering its columns by `p` and fitting
/// one complex scalar per column.
pub fn nmse_ambiguity_aware(h_true: &CMat, h_hat: &CMat, p: &PermutationMap) -> Result<f64> {
    check_shape("ambiguity-aware nmse", h_hat.shape(), h_true.shape())?;
    if p.perm.len() != h_true.ncols() || !p.is_bijection() {
        return Err(invalid("permutation does not match the column count"));
    }
    let hp = permute_columns(h_hat, &p.perm);
    let mut err = 0.0;
    for l in 0..h_true.ncols() {
        let e = hp.column(l);
        let t = h_true.column(l);
        let en = e.norm_squared();
        let scale = if en > 0.0 { e.dotc(&t) / en } else { Default::default() };
        err += (t - e * scale).norm_squared();
    }
    Ok(to_db_floored(err / frob_sq(h_true)))
}

/// Column matching by greedy normalized correlation against the truth.
/// Used for scoring only, never inside the estimator.
pub fn oracle_column_permutation(truth: &CMat, est: &CMat) -> PermutationMap {
    let l = truth.ncols();
    let tn: Vec<f64> = (0..l).map(|k| truth.column(k).norm()).collect();
    let en: Vec<f64> = (0..l).map(|n| est.column(n).norm()).collect();
    let corr = est.adjoint() * truth;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(l * l);
    for n in 0..l {
        for k in 0..l {
            let den = en[n] * tn[k];
            let v = if den > 0.0 { corr[(n, k)].norm() / den } else { 0.0 };
            pairs.push((n, k, v));
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut perm = vec![usize::MAX; l];
    let mut used = vec![false; l];
    for (n, k, _) in pairs {
        if perm[n] == usize::MAX && !used[k] {
            perm[n] = k;
            used[k] = true;
        }
    }
    PermutationMap {
        perm,
        source: PermutationSource::GroundTruth,
        degenerate_rows: Vec::new(),
    }
}
