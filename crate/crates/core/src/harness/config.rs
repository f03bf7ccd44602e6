//! Experiment configuration, presets and TOML overrides.

use serde::{Deserialize, Serialize};

use crate::badvamp::BadvampConfig;
use crate::channel::{ChannelSpecs, GeometricChannelSpec};
use crate::completion::NihtConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NmseSnr,
    NmseKappa,
    RateSnr,
    RateTr,
    RateL,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::NmseSnr,
        ExperimentKind::NmseKappa,
        ExperimentKind::RateSnr,
        ExperimentKind::RateTr,
        ExperimentKind::RateL,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::NmseSnr => "nmse-snr",
            ExperimentKind::NmseKappa => "nmse-kappa",
            ExperimentKind::RateSnr => "rate-snr",
            ExperimentKind::RateTr => "rate-tr",
            ExperimentKind::RateL => "rate-l",
        }
    }

    pub fn sweep_name(&self) -> &'static str {
        match self {
            ExperimentKind::NmseSnr | ExperimentKind::RateSnr => "snr_db",
            ExperimentKind::NmseKappa => "kappa",
            ExperimentKind::RateTr => "t_r",
            ExperimentKind::RateL => "l",
        }
    }

    pub fn computes_rates(&self) -> bool {
        matches!(
            self,
            ExperimentKind::RateSnr | ExperimentKind::RateTr | ExperimentKind::RateL
        )
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApSpacing {
    Half,
    Four,
}

impl ApSpacing {
    pub fn wavelengths(&self) -> f64 {
        match self {
            ApSpacing::Half => 0.5,
            ApSpacing::Four => 4.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ApSpacing::Half => "half",
            ApSpacing::Four => "four",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    /// AP antennas.
    pub m: usize,
    /// User antennas.
    pub n: usize,
    /// Surface elements.
    pub l: usize,
    /// Data streams.
    pub streams: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub paths_z: usize,
    pub paths_h: usize,
    /// Paths of G, which is also its rank.
    pub paths_g: usize,
    pub angle_spread_deg: f64,
}

impl ChannelProfile {
    /// Specs for one realization with surface size `l`, user size `n` and
    /// condition number `kappa` for H.
    pub fn specs(&self, l: usize, n: usize, kappa: f64) -> ChannelSpecs {
        let rank = self.paths_g.min(l).min(n);
        ChannelSpecs {
            z: GeometricChannelSpec::new(self.paths_z, self.angle_spread_deg),
            h: GeometricChannelSpec {
                target_condition: Some(kappa),
                ..GeometricChannelSpec::new(self.paths_h, self.angle_spread_deg)
            },
            g: GeometricChannelSpec {
                target_rank: Some(rank),
                ..GeometricChannelSpec::new(self.paths_g, self.angle_spread_deg)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dims: Dims,
    /// SNR used when SNR is not the swept variable.
    pub snr_db: f64,
    pub snr_grid_db: Vec<f64>,
    /// Condition number of H when it is not swept.
    pub kappa: f64,
    pub kappa_grid: Vec<f64>,
    pub t_d: usize,
    pub t_r: usize,
    pub t_r_grid: Vec<usize>,
    pub l_grid: Vec<usize>,
    pub sparsity: f64,
    /// Transmit energy per channel use.
    pub power_per_use: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub spacings: Vec<ApSpacing>,
    pub channel: ChannelProfile,
    /// Columnwise threshold of the support estimate.
    pub state_threshold: f64,
    /// Grid points per element and passes for the perfect-CSI refinement.
    pub grid_points: usize,
    pub grid_passes: usize,
    pub badvamp: BadvampConfig,
    pub niht: NihtConfig,
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub snr_db: f64,
    pub kappa: f64,
    pub t_r: usize,
    pub l: usize,
}

impl ExperimentConfig {
    /// Half the full-size dimensions, sized for a workstation.
    pub fn desk(kind: ExperimentKind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            dims: Dims { m: 32, n: 32, l: 32, streams: 2 },
            snr_db: 10.0,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            kappa: 100.0,
            kappa_grid: vec![40.0, 120.0, 240.0],
            t_d: 32,
            t_r: 250,
            t_r_grid: vec![100, 150, 200, 250, 300],
            l_grid: vec![16, 32, 64],
            sparsity: 0.1,
            power_per_use: 1.0,
            trials: 100,
            base_seed: 1,
            spacings: vec![ApSpacing::Half],
            channel: ChannelProfile {
                paths_z: 64,
                paths_h: 64,
                paths_g: 8,
                angle_spread_deg: 10.0,
            },
            state_threshold: 0.1,
            grid_points: 64,
            grid_passes: 3,
            badvamp: BadvampConfig {
                restarts: 4,
                support_restart_tol: Some(1e-3),
                ..BadvampConfig::default()
            },
            niht: NihtConfig::default(),
        };
        match kind {
            ExperimentKind::NmseSnr => c.spacings = vec![ApSpacing::Half, ApSpacing::Four],
            ExperimentKind::RateSnr | ExperimentKind::RateTr => c.kappa = 160.0,
            _ => {}
        }
        c
    }

    /// The full-size settings of the original study.
    pub fn full_size(kind: ExperimentKind) -> Self {
        let mut c = ExperimentConfig {
            kind,
            dims: Dims { m: 64, n: 64, l: 64, streams: 2 },
            snr_db: 10.0,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            kappa: 100.0,
            kappa_grid: vec![40.0, 80.0, 120.0, 160.0, 200.0, 240.0],
            t_d: 64,
            t_r: 500,
            t_r_grid: vec![200, 300, 400, 500, 600, 700, 800],
            l_grid: vec![64, 100, 144, 196, 256],
            sparsity: 0.1,
            power_per_use: 1.0,
            trials: 100,
            base_seed: 1,
            spacings: vec![ApSpacing::Half],
            channel: ChannelProfile {
                paths_z: 64,
                paths_h: 64,
                paths_g: 8,
                angle_spread_deg: 10.0,
            },
            state_threshold: 0.1,
            grid_points: 64,
            grid_passes: 3,
            badvamp: BadvampConfig {
                support_restart_tol: Some(1e-3),
                ..BadvampConfig::default()
            },
            niht: NihtConfig::default(),
        };
        match kind {
            ExperimentKind::NmseSnr => c.spacings = vec![ApSpacing::Half, ApSpacing::Four],
            ExperimentKind::RateSnr => {
                c.dims = Dims { m: 36, n: 36, l: 36, streams: 2 };
                c.t_r = 800;
                c.kappa = 160.0;
            }
            ExperimentKind::RateTr => c.kappa = 160.0,
            ExperimentKind::RateL => c.dims = Dims { m: 36, n: 36, l: 64, streams: 2 },
            ExperimentKind::NmseKappa => {}
        }
        c
    }

    pub fn preset(kind: ExperimentKind, paper_scale: bool) -> Self {
        if paper_scale {
            Self::full_size(kind)
        } else {
            Self::desk(kind)
        }
    }

    /// Applies a TOML document of overrides on top of `self`. Tables merge
    /// recursively; unknown keys are rejected.
    pub fn with_overrides(&self, toml_src: &str) -> Result<Self> {
        let over: toml::Table =
            toml::from_str(toml_src).map_err(|e| Error::Config(e.to_string()))?;
        let base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(base, over);
        let cfg: ExperimentConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.dims;
        if d.m == 0 || d.n == 0 || d.l == 0 {
            return bad("dimensions must be positive".into());
        }
        if d.streams == 0 || d.streams > d.m.min(d.n) {
            return bad(format!("streams must lie in [1, {}]", d.m.min(d.n)));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.t_d < d.n {
            return bad(format!("t_d = {} is below N = {}", self.t_d, d.n));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad("sparsity must lie in (0, 1]".into());
        }
        if !(self.power_per_use > 0.0) {
            return bad("power_per_use must be positive".into());
        }
        if self.spacings.is_empty() {
            return bad("at least one AP spacing is required".into());
        }
        if !(self.state_threshold > 0.0 && self.state_threshold < 1.0) {
            return bad("state_threshold must lie in (0, 1)".into());
        }
        let empty = match self.kind {
            ExperimentKind::NmseSnr | ExperimentKind::RateSnr => self.snr_grid_db.is_empty(),
            ExperimentKind::NmseKappa => self.kappa_grid.is_empty(),
            ExperimentKind::RateTr => self.t_r_grid.is_empty(),
            ExperimentKind::RateL => self.l_grid.is_empty(),
        };
        if empty {
            return bad(format!("sweep grid for {} is empty", self.kind.id()));
        }
        for p in self.sweep_points() {
            if p.t_r < d.n {
                return bad(format!("t_r = {} is below N = {}", p.t_r, d.n));
            }
            if p.kappa < 1.0 {
                return bad("kappa must be at least 1".into());
            }
            if p.l == 0 {
                return bad("surface size must be positive".into());
            }
        }
        self.badvamp.validate()
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let base = SweepPoint {
            index: 0,
            value: 0.0,
            snr_db: self.snr_db,
            kappa: self.kappa,
            t_r: self.t_r,
            l: self.dims.l,
        };
        let mk = |i: usize, f: &dyn Fn(&mut SweepPoint)| {
            let mut p = base;
            p.index = i;
            f(&mut p);
            p
        };
        match self.kind {
            ExperimentKind::NmseSnr | ExperimentKind::RateSnr => self
                .snr_grid_db
                .iter()
                .enumerate()
                .map(|(i, &v)| mk(i, &|p| {
                    p.value = v;
                    p.snr_db = v;
                }))
                .collect(),
            ExperimentKind::NmseKappa => self
                .kappa_grid
                .iter()
                .enumerate()
                .map(|(i, &v)| mk(i, &|p| {
                    p.value = v;
                    p.kappa = v;
                }))
                .collect(),
            ExperimentKind::RateTr => self
                .t_r_grid
                .iter()
                .enumerate()
                .map(|(i, &v)| mk(i, &|p| {
                    p.value = v as f64;
                    p.t_r = v;
                }))
                .collect(),
            ExperimentKind::RateL => self
                .l_grid
                .iter()
                .enumerate()
                .map(|(i, &v)| mk(i, &|p| {
                    p.value = v as f64;
                    p.l = v;
                }))
                .collect(),
        }
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for k in ExperimentKind::ALL {
            ExperimentConfig::desk(k).validate().unwrap();
            ExperimentConfig::full_size(k).validate().unwrap();
            assert_eq!(k.id().parse::<ExperimentKind>().unwrap(), k);
        }
    }

    #[test]
    fn overrides_merge_and_reject_unknown_keys() {
        let base = ExperimentConfig::desk(ExperimentKind::NmseSnr);
        let c = base
            .with_overrides("trials = 3\nsnr_grid_db = [5.0]\n[badvamp]\nmax_iters = 20\n[dims]\nm = 16\n")
            .unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.snr_grid_db, vec![5.0]);
        assert_eq!(c.badvamp.max_iters, 20);
        assert_eq!(c.badvamp.restarts, base.badvamp.restarts);
        assert_eq!((c.dims.m, c.dims.n), (16, 32));
        assert!(base.with_overrides("trails = 3").is_err());
        assert!(base.with_overrides("[badvamp]\nmax_iter = 3").is_err());
        assert!(base.with_overrides("trials = 0").is_err());
    }

    #[test]
    fn sweep_points_follow_kind() {
        let c = ExperimentConfig::desk(ExperimentKind::RateL);
        let pts = c.sweep_points();
        assert_eq!(pts.iter().map(|p| p.l).collect::<Vec<_>>(), vec![16, 32, 64]);
        assert!(pts.iter().all(|p| p.snr_db == 10.0));
        let c = ExperimentConfig::desk(ExperimentKind::NmseKappa);
        assert_eq!(c.sweep_points()[2].kappa, 240.0);
    }
}
