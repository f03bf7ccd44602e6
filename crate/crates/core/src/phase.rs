//! Surface phase design, eigenmode transmission and achievable rate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelTriple;
use crate::error::{check_shape, invalid, Result};
use crate::linalg::{c, frob_sq, hermitian_eigen, svd, CMat, ONE};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    /// Phases in (0, 2π].
    pub phases: Vec<f64>,
    /// 1 for active elements, 0 for switched-off ones.
    pub amplitudes: Vec<f64>,
    /// Elements whose phase was set by default rather than by the objective.
    pub flagged: Vec<usize>,
}

impl PhaseConfig {
    pub fn all_on(phases: Vec<f64>) -> Self {
        let l = phases.len();
        PhaseConfig {
            phases: phases.into_iter().map(wrap_phase).collect(),
            amplitudes: vec![1.0; l],
            flagged: Vec::new(),
        }
    }

    /// Surface switched off entirely.
    pub fn off(l: usize) -> Self {
        PhaseConfig {
            phases: vec![TWO_PI; l],
            amplitudes: vec![0.0; l],
            flagged: Vec::new(),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, l: usize) -> Self {
        Self::all_on((0..l).map(|_| rng.random::<f64>() * TWO_PI).collect())
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Diagonal entries `a_l e^{j φ_l}`.
    pub fn coefficients(&self) -> Vec<Complex64> {
        self.phases
            .iter()
            .zip(&self.amplitudes)
            .map(|(&p, &a)| Complex64::from_polar(a, p))
            .collect()
    }
}

/// Maps any angle into (0, 2π].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TWO_PI);
    if w == 0.0 {
        TWO_PI
    } else {
        w
    }
}

/// `G_dl Φ H_dl + Z_dl` with `G_dl` N x L, `H_dl` L x M, `Z_dl` N x M.
pub fn composite_channel(g_dl: &CMat, cfg: &PhaseConfig, h_dl: &CMat, z_dl: &CMat) -> Result<CMat> {
    let (n, l) = g_dl.shape();
    check_shape("composite H", (h_dl.nrows(), 1), (l, 1))?;
    check_shape("composite Z", z_dl.shape(), (n, h_dl.ncols()))?;
    check_shape("composite phases", (cfg.len(), 1), (l, 1))?;
    let mut gp = g_dl.clone();
    for (k, coef) in cfg.coefficients().into_iter().enumerate() {
        let mut col = gp.column_mut(k);
        col *= coef;
    }
    Ok(gp * h_dl + z_dl)
}

/// Downlink composite channel (N x M) of a channel triple.
pub fn composite_from_triple(t: &ChannelTriple, cfg: &PhaseConfig) -> Result<CMat> {
    composite_channel(&t.g.transpose(), cfg, &t.h.transpose(), &t.z)
}

/// Per-element coefficients `c_l = Σ_ij conj(z_ij) g_il h_lj`.
pub fn phase_coefficients(g_dl: &CMat, h_dl: &CMat, z_dl: &CMat) -> Result<Vec<Complex64>> {
    let (n, l) = g_dl.shape();
    check_shape("phase H", (h_dl.nrows(), 1), (l, 1))?;
    check_shape("phase Z", z_dl.shape(), (n, h_dl.ncols()))?;
    // B = H_dl Z^H is L x N; c_l = Σ_i B[l, i] G[i, l].
    let b = h_dl * z_dl.adjoint();
    Ok((0..l)
        .map(|k| (0..n).map(|i| b[(k, i)] * g_dl[(i, k)]).sum())
        .collect())
}

/// Closed-form phases: each element aligns its reflected path with the
/// direct path, `φ_l = -arg(c_l)`.
pub fn optimal_phases(g_dl: &CMat, h_dl: &CMat, z_dl: &CMat) -> Result<PhaseConfig> {
    let coef = phase_coefficients(g_dl, h_dl, z_dl)?;
    let mut flagged = Vec::new();
    let phases = coef
        .iter()
        .enumerate()
        .map(|(k, cl)| {
            if cl.norm() == 0.0 || !cl.re.is_finite() || !cl.im.is_finite() {
                flagged.push(k);
                TWO_PI
            } else {
                wrap_phase(-cl.arg())
            }
        })
        .collect();
    let mut cfg = PhaseConfig::all_on(phases);
    cfg.flagged = flagged;
    Ok(cfg)
}

/// `|G_dl Φ H_dl + Z_dl|_F^2`
pub fn channel_gain(g_dl: &CMat, cfg: &PhaseConfig, h_dl: &CMat, z_dl: &CMat) -> Result<f64> {
    Ok(frob_sq(&composite_channel(g_dl, cfg, h_dl, z_dl)?))
}

pub const GRID_SEARCH_MAX_ELEMENTS: usize = 16;

/// Coordinate ascent on the exact gain, starting from all phases at 2π.
pub fn grid_search_phases(
    g_dl: &CMat,
    h_dl: &CMat,
    z_dl: &CMat,
    points_per_element: usize,
    passes: usize,
) -> Result<PhaseConfig> {
    let l = g_dl.ncols();
    grid_search_phases_from(g_dl, h_dl, z_dl, points_per_element, passes, &PhaseConfig::all_on(vec![TWO_PI; l]))
}

/// Coordinate ascent on the exact gain from a given starting point. Each
/// element scans `points_per_element` phases `2π k / P`, k = 1..P, and keeps
/// its current phase unless a grid point is strictly better.
pub fn grid_search_phases_from(
    g_dl: &CMat,
    h_dl: &CMat,
    z_dl: &CMat,
    points_per_element: usize,
    passes: usize,
    initial: &PhaseConfig,
) -> Result<PhaseConfig> {
    let l = g_dl.ncols();
    if l > GRID_SEARCH_MAX_ELEMENTS {
        return Err(invalid(format!(
            "grid search limited to {GRID_SEARCH_MAX_ELEMENTS} elements, got {l}"
        )));
    }
    if points_per_element == 0 {
        return Err(invalid("need at least one grid point"));
    }
    let mut cfg = PhaseConfig::all_on(initial.phases.clone());
    let mut delta = composite_channel(g_dl, &cfg, h_dl, z_dl)?;
    let grid: Vec<(f64, Complex64)> = (1..=points_per_element)
        .map(|k| {
            let p = TWO_PI * k as f64 / points_per_element as f64;
            (p, Complex64::from_polar(1.0, p))
        })
        .collect();
    for _ in 0..passes {
        for k in 0..l {
            // Split Δ = A e^{jφ_k} + B, with A the rank-one term of element k.
            let a = g_dl.column(k) * h_dl.row(k);
            let cur = Complex64::from_polar(1.0, cfg.phases[k]);
            let b = &delta - &a * cur;
            let inner: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
            let value = |e: Complex64| (e * inner).re;
            let mut best = (cfg.phases[k], value(cur));
            for &(p, e) in &grid {
                let v = value(e);
                if v > best.1 {
                    best = (p, v);
                }
            }
            cfg.phases[k] = best.0;
            delta = b + a * Complex64::from_polar(1.0, best.0);
        }
    }
    Ok(cfg)
}

/// Precoder `W` (M x Ns) and combiner `V` (N x Ns) along the dominant
/// singular directions of a downlink channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenmodeLink {
    pub w: CMat,
    pub v: CMat,
    pub streams: usize,
    /// Streams beyond the numerical rank of the channel.
    pub rank_deficient: bool,
}

pub fn eigenmode(delta: &CMat, streams: usize) -> Result<EigenmodeLink> {
    let (n, m) = delta.shape();
    if streams == 0 || streams > n.min(m) {
        return Err(invalid(format!("streams must lie in [1, {}]", n.min(m))));
    }
    let d = svd(delta);
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    let mut w = CMat::zeros(m, streams);
    let mut v = CMat::zeros(n, streams);
    let mut rank_deficient = false;
    for k in 0..streams {
        let mut wk = d.v.column(k).into_owned();
        let (imax, _) = wk
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        let pivot = wk[imax];
        let rot = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { ONE };
        wk *= rot;
        let sk = d.singular_values[k];
        let vk = if sk > 1e-12 * smax && sk > 0.0 {
            (delta * &wk) * c(1.0 / sk, 0.0)
        } else {
            rank_deficient = true;
            d.u.column(k) * rot
        };
        w.set_column(k, &wk);
        v.set_column(k, &vk);
    }
    Ok(EigenmodeLink {
        w,
        v,
        streams,
        rank_deficient,
    })
}

/// `log2 det(I + ρ W^H Δ^H V V^H Δ W)` in bits/s/Hz.
pub fn achievable_rate(delta: &CMat, w: &CMat, v: &CMat, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("SNR must be positive"));
    }
    let (n, m) = delta.shape();
    check_shape("rate precoder", (w.nrows(), 1), (m, 1))?;
    check_shape("rate combiner", (v.nrows(), 1), (n, 1))?;
    check_shape("rate streams", (v.ncols(), 1), (w.ncols(), 1))?;
    let e = v.adjoint() * delta * w;
    let a = e.adjoint() * &e;
    let ns = w.ncols();
    let mut k = CMat::identity(ns, ns) + a * c(rho, 0.0);
    k = (&k + k.adjoint()) * c(0.5, 0.0);
    let logdet = match k.clone().cholesky() {
        Some(ch) => ch.l().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum::<f64>(),
        None => hermitian_eigen(&k).values.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).sum(),
    };
    Ok(logdet / std::f64::consts::LN_2)
}

/// Rate reached with a given phase configuration, designing eigenmode
/// precoders on `estimate` and evaluating them on `truth`.
pub fn rate_with_design(truth: &CMat, estimate: &CMat, streams: usize, rho: f64) -> Result<f64> {
    let link = eigenmode(estimate, streams)?;
    achievable_rate(truth, &link.w, &link.v, rho)
}
