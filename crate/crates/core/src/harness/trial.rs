//! One Monte-Carlo trial of the full estimation and design pipeline.

use std::time::Instant;

use rand::Rng;

use super::config::{ApSpacing, ExperimentConfig, SweepPoint};
use crate::ambiguity::{
    apply_permutation, nmse_ambiguity_aware, oracle_column_permutation, recover_permutation,
    state_matrix,
};
use crate::badvamp::{badvamp, column_priors, simulate_stage2};
use crate::channel::{gen_channel_set, ArrayLayout, ChannelTriple};
use crate::completion::{enough_measurements, niht, CompletionProblem};
use crate::direct::{rmmse_estimate, simulate_stage1, stage2_error_variance};
use crate::error::Result;
use crate::linalg::{nmse_db, random_orthonormal, CMat};
use crate::phase::{
    achievable_rate, composite_channel, composite_from_triple, grid_search_phases_from,
    optimal_phases, rate_with_design, PhaseConfig, GRID_SEARCH_MAX_ELEMENTS,
};
use crate::training::{dft_training, random_training, sparse_schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Proposed,
    PerfectCsi,
    Random,
    NoLis,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::PerfectCsi, Scheme::Random, Scheme::NoLis];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::PerfectCsi => "perfect_csi",
            Scheme::Random => "random",
            Scheme::NoLis => "no_lis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeRates {
    pub proposed: f64,
    pub perfect_csi: f64,
    pub random: f64,
    pub no_lis: f64,
}

impl SchemeRates {
    pub fn get(&self, s: Scheme) -> f64 {
        match s {
            Scheme::Proposed => self.proposed,
            Scheme::PerfectCsi => self.perfect_csi,
            Scheme::Random => self.random,
            Scheme::NoLis => self.no_lis,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: &'static str,
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub spacing: ApSpacing,
    pub trial: usize,
    pub seed: u64,
    pub nmse_h_db: f64,
    pub nmse_g_db: f64,
    pub nmse_z_db: f64,
    pub rates: Option<SchemeRates>,
    pub permutation_exact: bool,
    pub restarts_used: usize,
    pub diverged: bool,
    pub runtime_ms: f64,
}

/// Everything the estimator produced in one trial.
#[derive(Debug, Clone)]
pub struct PipelineEstimates {
    /// M x L, columns in schedule order.
    pub h: CMat,
    /// L x N, rows in schedule order.
    pub g: CMat,
    /// M x N uplink direct channel.
    pub z_uplink: CMat,
    pub permutation_exact: bool,
    pub restarts_used: usize,
    pub diverged: bool,
}

/// Runs stages one and two on a channel realization.
pub fn estimate_channels<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    truth: &ChannelTriple,
) -> Result<PipelineEstimates> {
    let (_, n, l) = truth.dims();
    let noise_var = 10f64.powf(-point.snr_db / 10.0);
    let p_u = cfg.power_per_use;

    let x_a = dft_training(n, cfg.t_d, p_u * cfg.t_d as f64)?;
    let obs = simulate_stage1(rng, &truth.z, &x_a.x, noise_var)?;
    let z_hat = rmmse_estimate(&obs.y_a, &x_a.x, noise_var)?;
    let err_var = stage2_error_variance(noise_var, n, x_a.power);

    let x_b = random_training(rng, n, point.t_r, p_u * point.t_r as f64)?;
    let sched = sparse_schedule(rng, l, point.t_r, cfg.sparsity)?;
    let y = simulate_stage2(rng, truth, &sched, &x_b.x, Some(&z_hat), noise_var, err_var)?;

    let gx = &truth.g * &x_b.x;
    let variances: Vec<f64> = (0..point.t_r)
        .map(|t| gx.column(t).norm_squared() / l as f64)
        .collect();
    let k = crate::training::elements_on(l, cfg.sparsity);
    let priors = column_priors(k as f64 / l as f64, &variances);
    let est = badvamp(&y, l, &priors, noise_var + err_var, &cfg.badvamp, rng)?;

    let s_bar = state_matrix(&est.d_hat, cfg.state_threshold);
    let perm = recover_permutation(&sched.s, &s_bar)?;
    let (h_check, d_check) = apply_permutation(&est.h_hat, &est.d_hat, &perm)?;
    let oracle = oracle_column_permutation(&truth.h, &est.h_hat);

    let rank = truth.g.nrows().min(cfg.channel.paths_g).min(n);
    if !enough_measurements(k * point.t_r, l, point.t_r, rank) {
        log::warn!(
            "{} observed entries are fewer than the {} degrees of freedom of a rank-{rank} completion",
            k * point.t_r,
            rank * (l + point.t_r - rank)
        );
    }
    let g_check = niht(&CompletionProblem {
        d_check: &d_check,
        mask: &sched.s,
        x_b: &x_b.x,
        rank,
        config: cfg.niht,
    })?
    .g;

    Ok(PipelineEstimates {
        h: h_check,
        g: g_check,
        z_uplink: z_hat,
        permutation_exact: perm.perm == oracle.perm,
        restarts_used: est.restarts_used,
        diverged: est.diverged,
    })
}

/// NMSE of the estimated G after resolving the per-row permutation, phase
/// and scale against the truth.
pub fn nmse_g_db(truth: &CMat, est: &CMat) -> Result<f64> {
    let (tt, et) = (truth.transpose(), est.transpose());
    let p = oracle_column_permutation(&tt, &et);
    nmse_ambiguity_aware(&tt, &et, &p)
}

pub fn nmse_h_db(truth: &CMat, est: &CMat) -> Result<f64> {
    let p = oracle_column_permutation(truth, est);
    nmse_ambiguity_aware(truth, est, &p)
}

/// Achievable rates of the four phase/precoder schemes.
pub fn scheme_rates<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ExperimentConfig,
    truth: &ChannelTriple,
    est: &PipelineEstimates,
    snr_db: f64,
) -> Result<SchemeRates> {
    let (m, n, l) = truth.dims();
    let ns = cfg.dims.streams;
    let rho = 10f64.powf(snr_db / 10.0);

    let (g_t, h_t) = (truth.g.transpose(), truth.h.transpose());

    let g_e = est.g.transpose();
    let h_e = est.h.transpose();
    let z_e = est.z_uplink.transpose();
    let phi = optimal_phases(&g_e, &h_e, &z_e)?;
    let designed = composite_channel(&g_e, &phi, &h_e, &z_e)?;
    let proposed = rate_with_design(&composite_from_triple(truth, &phi)?, &designed, ns, rho)?;

    let mut phi_star = optimal_phases(&g_t, &h_t, &truth.z)?;
    if l <= GRID_SEARCH_MAX_ELEMENTS {
        phi_star = grid_search_phases_from(&g_t, &h_t, &truth.z, cfg.grid_points, cfg.grid_passes, &phi_star)?;
    }
    let true_star = composite_from_triple(truth, &phi_star)?;
    let perfect_csi = rate_with_design(&true_star, &true_star, ns, rho)?;

    let phi_rand = PhaseConfig::random(rng, l);
    let w = random_orthonormal(rng, m, ns);
    let v = random_orthonormal(rng, n, ns);
    let random = achievable_rate(&composite_from_triple(truth, &phi_rand)?, &w, &v, rho)?;
    let no_lis = achievable_rate(&composite_from_triple(truth, &PhaseConfig::off(l))?, &w, &v, rho)?;

    Ok(SchemeRates {
        proposed,
        perfect_csi,
        random,
        no_lis,
    })
}

/// Full trial: channels, both estimation stages, metrics and (for rate
/// experiments) the four rate schemes.
pub fn run_trial(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    spacing: ApSpacing,
    variant: usize,
    trial: usize,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = super::seed::trial_seed(cfg.base_seed, cfg.kind.id(), point.index, variant, trial);
    let mut rng = super::seed::trial_rng(seed);
    let d = cfg.dims;
    let layout = ArrayLayout::near_square(d.m, d.n, point.l, spacing.wavelengths())?;
    let specs = cfg.channel.specs(point.l, d.n, point.kappa);
    let truth = gen_channel_set(&mut rng, &layout, &specs)?;

    let est = estimate_channels(&mut rng, cfg, point, &truth)?;
    let nmse_h = nmse_h_db(&truth.h, &est.h)?;
    let nmse_g = nmse_g_db(&truth.g, &est.g)?;
    let nmse_z = nmse_db(&truth.direct_uplink(), &est.z_uplink);
    let rates = if cfg.kind.computes_rates() {
        Some(scheme_rates(&mut rng, cfg, &truth, &est, point.snr_db)?)
    } else {
        None
    };
    Ok(TrialRecord {
        experiment: cfg.kind.id(),
        sweep_index: point.index,
        sweep_value: point.value,
        spacing,
        trial,
        seed,
        nmse_h_db: nmse_h,
        nmse_g_db: nmse_g,
        nmse_z_db: nmse_z,
        rates,
        permutation_exact: est.permutation_exact,
        restarts_used: est.restarts_used,
        diverged: est.diverged,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

