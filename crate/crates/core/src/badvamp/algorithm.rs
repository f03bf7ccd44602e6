//! Bilinear adaptive VAMP for `Y = H D + noise` with a sparse `D`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dictionary::update_dictionary;
use super::lmmse::LmmseOperator;
use super::prior::{BgPrior, ColumnPosterior};
use crate::error::{invalid, Result};
use crate::linalg::{c, crandn_matrix, frob_sq, is_finite, matmul, matmul_ah, svd, CMat};

/// Geometric decay of the working noise variance used inside the LMMSE
/// stage, in units of the mean measurement energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseAnneal {
    pub start: f64,
    pub floor: f64,
    /// Fraction of `max_iters` after which the floor is reached.
    pub fraction: f64,
}

impl Default for NoiseAnneal {
    fn default() -> Self {
        NoiseAnneal {
            start: 1.0,
            floor: 1e-9,
            fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BadvampConfig {
    pub max_iters: usize,
    pub inner_em_iters: usize,
    pub inner_lmmse_iters: usize,
    /// Maximum number of independent runs.
    pub restarts: usize,
    pub init_r_var: f64,
    pub init_gamma: f64,
    pub gamma_floor: f64,
    pub damping: f64,
    /// A run whose relative residual exceeds this, on top of the level the
    /// noise variance alone explains, triggers another run.
    pub residual_restart_tol: f64,
    /// When set, a run whose off-support energy ratio exceeds this also
    /// triggers another run, and among runs that fit the measurements the
    /// one with the least off-support energy is kept.
    pub support_restart_tol: Option<f64>,
    pub anneal: Option<NoiseAnneal>,
    /// Project onto the dominant row space and whiten before iterating.
    pub whiten: bool,
}

impl Default for BadvampConfig {
    fn default() -> Self {
        BadvampConfig {
            max_iters: 300,
            inner_em_iters: 1,
            inner_lmmse_iters: 0,
            restarts: 10,
            init_r_var: 10.0,
            init_gamma: 1e-3,
            gamma_floor: 1e-8,
            damping: 1.0,
            residual_restart_tol: 0.1,
            support_restart_tol: None,
            anneal: Some(NoiseAnneal::default()),
            whiten: true,
        }
    }
}

impl BadvampConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(invalid("max_iters and restarts must be positive"));
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor.is_finite()) {
            return Err(invalid("gamma_floor must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping must lie in (0, 1]"));
        }
        if !(self.init_r_var > 0.0 && self.init_gamma > 0.0) {
            return Err(invalid("initial variances must be positive"));
        }
        if let Some(a) = &self.anneal {
            if !(a.start > 0.0 && a.floor > 0.0 && a.fraction > 0.0) {
                return Err(invalid("anneal parameters must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-column VAMP quantities and the current dictionary.
#[derive(Debug, Clone)]
pub struct BadvampState {
    pub r1: CMat,
    pub r2: CMat,
    pub d1: CMat,
    pub d2: CMat,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    pub h: CMat,
}

#[derive(Debug, Clone)]
pub struct BadvampResult {
    /// M x L
    pub h_hat: CMat,
    /// L x T
    pub d_hat: CMat,
    /// Relative residual `|Y - H D| / |Y|` per iteration of the selected run.
    pub residual_history: Vec<f64>,
    /// Number of runs performed.
    pub restarts_used: usize,
    pub final_residual: f64,
    pub off_support_ratio: f64,
    /// Every run produced non-finite iterates.
    pub diverged: bool,
}

const GAMMA_CEIL: f64 = 1e15;

/// Fraction of the energy of `d` lying outside the `k` largest entries of
/// each column.
pub fn off_support_ratio(d: &CMat, k: &[usize]) -> f64 {
    let mut off = 0.0;
    let mut total = 0.0;
    let mut mags: Vec<f64> = Vec::with_capacity(d.nrows());
    for (j, &kj) in k.iter().enumerate().take(d.ncols()) {
        mags.clear();
        mags.extend(d.column(j).iter().map(|z| z.norm_sqr()));
        mags.sort_by(|a, b| b.total_cmp(a));
        total += mags.iter().sum::<f64>();
        off += mags.iter().skip(kj).sum::<f64>();
    }
    if total > 0.0 {
        off / total
    } else {
        0.0
    }
}

/// Measurements after optional projection and whitening.
struct Prepared {
    w: CMat,
    row_noise: Vec<f64>,
    /// `(U, s)` with `Y ≈ U diag(s) W`.
    basis: Option<(CMat, Vec<f64>)>,
    y_energy: f64,
    outside_energy: f64,
}

fn prepare(y: &CMat, atoms: usize, noise_var: f64, whiten: bool) -> Prepared {
    let y_energy = frob_sq(y);
    let (m, t) = y.shape();
    let k = atoms.min(m).min(t);
    if whiten && k > 0 && y_energy > 0.0 {
        let d = svd(y);
        let s: Vec<f64> = d.singular_values[..k].to_vec();
        if s[k - 1] > 1e-12 * s[0] {
            let u = d.u.columns(0, k).into_owned();
            let mut w = matmul_ah(&u, y);
            for (i, &si) in s.iter().enumerate() {
                let mut row = w.row_mut(i);
                row *= c(1.0 / si, 0.0);
            }
            let kept: f64 = s.iter().map(|x| x * x).sum();
            let row_noise = s.iter().map(|&si| noise_var / (si * si)).collect();
            return Prepared {
                w,
                row_noise,
                basis: Some((u, s)),
                y_energy,
                outside_energy: (y_energy - kept).max(0.0),
            };
        }
    }
    Prepared {
        w: y.clone(),
        row_noise: vec![noise_var; m],
        basis: None,
        y_energy,
        outside_energy: 0.0,
    }
}

impl Prepared {
    fn relative_residual(&self, h: &CMat, d: &CMat) -> f64 {
        let mut r = &self.w - matmul(h, d);
        if let Some((_, s)) = &self.basis {
            for (i, &si) in s.iter().enumerate() {
                let mut row = r.row_mut(i);
                row *= c(si, 0.0);
            }
        }
        let res = self.outside_energy + frob_sq(&r);
        if self.y_energy > 0.0 {
            (res / self.y_energy).sqrt()
        } else {
            res.sqrt()
        }
    }

    fn unwhiten(&self, h: &CMat) -> CMat {
        match &self.basis {
            Some((u, s)) => {
                let mut sh = h.clone();
                for (i, &si) in s.iter().enumerate() {
                    let mut row = sh.row_mut(i);
                    row *= c(si, 0.0);
                }
                u * sh
            }
            None => h.clone(),
        }
    }
}

struct RunOutcome {
    h: CMat,
    d: CMat,
    history: Vec<f64>,
    diverged: bool,
}

fn damp(new: f64, old: f64, rho: f64) -> f64 {
    rho * new + (1.0 - rho) * old
}

fn run_once<R: Rng + ?Sized>(
    p: &Prepared,
    atoms: usize,
    priors: &[BgPrior],
    cfg: &BadvampConfig,
    rng: &mut R,
) -> RunOutcome {
    let (m, t) = p.w.shape();
    let l = atoms;
    let floor = cfg.gamma_floor;
    let prior = |j: usize| &priors[if priors.len() == 1 { 0 } else { j }];

    let mut st = BadvampState {
        r1: crandn_matrix(rng, l, t, cfg.init_r_var),
        r2: CMat::zeros(l, t),
        d1: CMat::zeros(l, t),
        d2: CMat::zeros(l, t),
        gamma1: vec![cfg.init_gamma; t],
        gamma2: vec![0.0; t],
        eta1: vec![0.0; t],
        eta2: vec![0.0; t],
        h: crandn_matrix(rng, m, l, 1.0),
    };

    let mut ysc = frob_sq(&p.w) / (m * t) as f64;
    if !(ysc > 0.0) {
        ysc = 1.0;
    }
    // A working floor at the mean row noise over-regularizes the strong
    // rows, which keeps the weak whitened directions from being fitted to
    // noise.
    let mean_noise = p.row_noise.iter().sum::<f64>() / m as f64;
    let schedule = cfg.anneal.map(|a| {
        let fl = (mean_noise / ysc).max(a.floor);
        let steps = a.fraction * cfg.max_iters as f64;
        let decay = if fl < a.start { (fl / a.start).powf(1.0 / steps) } else { 1.0 };
        (a.start, decay, fl)
    });

    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut var_col = vec![0.0; t];
    let mut first = true;
    for it in 0..cfg.max_iters {
        // Denoising with adaptive precision.
        for _ in 0..=cfg.inner_em_iters {
            for j in 0..t {
                let post = ColumnPosterior::new(st.gamma1[j], prior(j));
                let mut vsum = 0.0;
                let mut esum = 0.0;
                for i in 0..l {
                    let r = st.r1[(i, j)];
                    let (d, v) = post.eval(r);
                    st.d1[(i, j)] = d;
                    vsum += v;
                    esum += (d - r).norm_sqr();
                }
                let mean_var = (vsum / l as f64).max(1.0 / GAMMA_CEIL);
                st.eta1[j] = (1.0 / mean_var).clamp(floor, GAMMA_CEIL);
                st.gamma1[j] = (1.0 / (esum / l as f64 + mean_var)).clamp(floor, GAMMA_CEIL);
                var_col[j] = mean_var;
            }
        }

        // Onsager correction towards the LMMSE stage.
        for j in 0..t {
            let (e1, g1) = (st.eta1[j], st.gamma1[j]);
            let g2 = (e1 - g1).clamp(floor, GAMMA_CEIL);
            let g2 = if first { g2 } else { damp(g2, st.gamma2[j], cfg.damping) };
            for i in 0..l {
                let r2 = (st.d1[(i, j)] * e1 - st.r1[(i, j)] * g1) / (e1 - g1).max(floor);
                st.r2[(i, j)] = if first {
                    r2
                } else {
                    r2 * cfg.damping + st.r2[(i, j)] * (1.0 - cfg.damping)
                };
            }
            st.gamma2[j] = g2;
        }

        let base = match schedule {
            Some((start, decay, fl)) => ysc * (start * decay.powi(it as i32)).max(fl),
            None => ysc * 1e-12,
        };
        let precision: Vec<f64> = p.row_noise.iter().map(|&v| 1.0 / v.max(base)).collect();

        let mut blk = None;
        for _ in 0..=cfg.inner_lmmse_iters {
            let op = match LmmseOperator::new(&st.h, &precision) {
                Ok(op) => op,
                Err(_) => return diverged(st, history),
            };
            let b = op.apply(&p.w, &st.r2, &st.gamma2);
            match update_dictionary(&p.w, &b.d2, &b.c_sum) {
                Ok(h) => st.h = h,
                Err(_) => return diverged(st, history),
            }
            blk = Some(b);
        }
        let blk = blk.expect("at least one LMMSE pass");
        st.d2 = blk.d2;
        st.eta2 = blk.eta2.iter().map(|e| e.clamp(floor, GAMMA_CEIL)).collect();

        // Onsager correction back to the denoiser.
        for j in 0..t {
            let (e2, g2) = (st.eta2[j], st.gamma2[j]);
            let raw = (e2 - g2).max(floor);
            let g1 = if first { raw } else { damp(raw, st.gamma1[j], cfg.damping) };
            for i in 0..l {
                let r1 = (st.d2[(i, j)] * e2 - st.r2[(i, j)] * g2) / raw;
                st.r1[(i, j)] = if first {
                    r1
                } else {
                    r1 * cfg.damping + st.r1[(i, j)] * (1.0 - cfg.damping)
                };
            }
            st.gamma1[j] = g1.clamp(floor, GAMMA_CEIL);
        }
        first = false;

        debug_assert!(st
            .gamma1
            .iter()
            .chain(&st.gamma2)
            .chain(&st.eta1)
            .chain(&st.eta2)
            .all(|&g| g >= floor));

        let res = p.relative_residual(&st.h, &st.d2);
        if !res.is_finite() || !is_finite(&st.r1) {
            return diverged(st, history);
        }
        history.push(res);
    }
    RunOutcome {
        h: st.h,
        d: st.d2,
        history,
        diverged: false,
    }
}

fn diverged(st: BadvampState, history: Vec<f64>) -> RunOutcome {
    RunOutcome {
        h: st.h,
        d: st.d2,
        history,
        diverged: true,
    }
}

/// Recovers `H` (M x `atoms`) and sparse `D` from `Y = H D + noise`.
///
/// `priors` holds one prior per column of `Y`, or a single prior shared by
/// all columns. `noise_var` is the per-entry measurement noise variance.
pub fn badvamp<R: Rng + ?Sized>(
    y: &CMat,
    atoms: usize,
    priors: &[BgPrior],
    noise_var: f64,
    config: &BadvampConfig,
    rng: &mut R,
) -> Result<BadvampResult> {
    config.validate()?;
    if atoms == 0 {
        return Err(invalid("need at least one atom"));
    }
    if !is_finite(y) {
        return Err(invalid("measurements must be finite"));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(invalid("noise variance must be non-negative"));
    }
    let t = y.ncols();
    if priors.len() != 1 && priors.len() != t {
        return Err(invalid(format!(
            "expected 1 or {t} priors, got {}",
            priors.len()
        )));
    }
    for p in priors {
        p.validate()?;
    }
    let k: Vec<usize> = (0..t)
        .map(|j| {
            let p = &priors[if priors.len() == 1 { 0 } else { j }];
            ((p.sparsity * atoms as f64).round() as usize).clamp(1, atoms)
        })
        .collect();

    let prep = prepare(y, atoms, noise_var, config.whiten);
    // Relative residual that the noise alone accounts for.
    let noise_floor = if prep.y_energy > 0.0 {
        (noise_var * y.len() as f64 / prep.y_energy).sqrt()
    } else {
        0.0
    };
    let residual_limit = config.residual_restart_tol + noise_floor;
    // Noise leaks into the off-support entries of even the correct solution.
    let support_limit = config
        .support_restart_tol
        .map(|tol| tol + 0.5 * noise_floor * noise_floor);
    let mut best: Option<((bool, f64), BadvampResult)> = None;
    let mut runs = 0;
    for _ in 0..config.restarts {
        runs += 1;
        let out = run_once(&prep, atoms, priors, config, rng);
        let residual = out.history.last().copied().unwrap_or(f64::INFINITY);
        let ok = !out.diverged && residual.is_finite();
        let off = if ok { off_support_ratio(&out.d, &k) } else { 1.0 };
        let fits = ok && residual <= residual_limit;
        // Runs that fit come first; among those the support figure decides
        // when it is in use.
        let score = match (ok, config.support_restart_tol) {
            (false, _) => (true, f64::INFINITY),
            (true, Some(_)) => (!fits, if fits { off } else { residual }),
            (true, None) => (false, residual),
        };
        let candidate = BadvampResult {
            h_hat: prep.unwhiten(&out.h),
            d_hat: out.d,
            residual_history: out.history,
            restarts_used: 0,
            final_residual: residual,
            off_support_ratio: off,
            diverged: !ok,
        };
        let better = match &best {
            None => true,
            Some((s, _)) => score.0 < s.0 || (score.0 == s.0 && score.1 < s.1),
        };
        if better {
            best = Some((score, candidate));
        }
        let good = fits && support_limit.map_or(true, |tol| off <= tol);
        if good {
            break;
        }
    }
    let (_, mut result) = best.expect("at least one run");
    result.restarts_used = runs;
    log::debug!(
        "badvamp: {runs} run(s), residual {:.3e}, off-support {:.3e}",
        result.final_residual,
        result.off_support_ratio
    );
    Ok(result)
}

/// Convenience: zero-mean priors with a shared sparsity and per-column
/// variance.
pub fn column_priors(sparsity: f64, variances: &[f64]) -> Vec<BgPrior> {
    variances.iter().map(|&v| BgPrior::new(sparsity, v)).collect()
}
