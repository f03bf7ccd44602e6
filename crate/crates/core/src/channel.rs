//! Narrowband geometric channel model over uniform planar arrays.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{c, crandn, frob_sq, numerical_rank, svd, CMat, CVec};

/// Rectangular antenna grid in the yz-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    pub width_elems: usize,
    pub height_elems: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl UpaGeometry {
    pub fn new(width_elems: usize, height_elems: usize, spacing: f64) -> Result<Self> {
        let g = UpaGeometry {
            width_elems,
            height_elems,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid of `n` elements that is as close to square as the divisors of
    /// `n` allow, wider than tall.
    pub fn near_square(n: usize, spacing: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("array needs at least one element"));
        }
        let mut h = (n as f64).sqrt().floor() as usize;
        while n % h != 0 {
            h -= 1;
        }
        Self::new(n / h, h, spacing)
    }

    pub fn num_elems(&self) -> usize {
        self.width_elems * self.height_elems
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_elems == 0 || self.height_elems == 0 {
            return Err(invalid("array geometry has zero elements"));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(invalid(format!("spacing must be positive, got {}", self.spacing)));
        }
        Ok(())
    }
}

/// Array response for a plane wave arriving from (azimuth, elevation).
/// Element (m, n) of the grid sits at index `m * height + n`.
pub fn array_response(geom: &UpaGeometry, azimuth: f64, elevation: f64) -> Result<CVec> {
    geom.validate()?;
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(invalid("angles must be finite"));
    }
    let n_el = geom.num_elems();
    let norm = 1.0 / (n_el as f64).sqrt();
    let kd = 2.0 * PI * geom.spacing;
    let u = azimuth.sin() * elevation.sin();
    let w = elevation.cos();
    let h = geom.height_elems;
    Ok(CVec::from_fn(n_el, |idx, _| {
        let m = (idx / h) as f64;
        let n = (idx % h) as f64;
        Complex64::from_polar(norm, kd * (m * u + n * w))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricChannelSpec {
    pub num_paths: usize,
    /// Standard deviation of the Laplacian angle offsets, in degrees.
    pub angle_spread_deg: f64,
    #[serde(default)]
    pub target_condition: Option<f64>,
    #[serde(default)]
    pub target_rank: Option<usize>,
}

impl GeometricChannelSpec {
    pub fn new(num_paths: usize, angle_spread_deg: f64) -> Self {
        GeometricChannelSpec {
            num_paths,
            angle_spread_deg,
            target_condition: None,
            target_rank: None,
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.num_paths == 0 {
            return Err(invalid("num_paths must be at least 1"));
        }
        if !(self.angle_spread_deg.is_finite() && self.angle_spread_deg >= 0.0) {
            return Err(invalid("angle spread must be finite and non-negative"));
        }
        if let Some(k) = self.target_condition {
            if !(k.is_finite() && k >= 1.0) {
                return Err(invalid(format!("target condition must be >= 1, got {k}")));
            }
        }
        if let Some(r) = self.target_rank {
            if r == 0 || r > rows.min(cols) {
                return Err(invalid(format!(
                    "target rank {r} outside [1, {}]",
                    rows.min(cols)
                )));
            }
            if r > self.num_paths {
                return Err(invalid("target rank exceeds the number of paths"));
            }
        }
        Ok(())
    }
}

/// Mean angles of one channel realization, shared by all its paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanAngles {
    pub az_arr: f64,
    pub el_arr: f64,
    pub az_dep: f64,
    pub el_dep: f64,
}

impl MeanAngles {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        MeanAngles {
            az_arr: rng.random_range(0.0..2.0 * PI),
            el_arr: rng.random_range(0.0..PI),
            az_dep: rng.random_range(0.0..2.0 * PI),
            el_dep: rng.random_range(0.0..PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDraw {
    pub gain: Complex64,
    pub az_arr: f64,
    pub el_arr: f64,
    pub az_dep: f64,
    pub el_dep: f64,
}

/// Zero-mean Laplacian sample with the given standard deviation.
fn laplace<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    let b = std_dev / std::f64::consts::SQRT_2;
    let a: f64 = Exp1.sample(rng);
    let e: f64 = Exp1.sample(rng);
    b * (a - e)
}

/// One propagation path: unit-variance complex gain, angles scattered
/// around the realization means.
pub fn draw_path<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &GeometricChannelSpec,
    means: &MeanAngles,
) -> PathDraw {
    let sd = spec.angle_spread_deg.to_radians();
    let gain = crandn(rng);
    PathDraw {
        gain,
        az_arr: means.az_arr + laplace(rng, sd),
        el_arr: means.el_arr + laplace(rng, sd),
        az_dep: means.az_dep + laplace(rng, sd),
        el_dep: means.el_dep + laplace(rng, sd),
    }
}

/// Sum of `num_paths` rank-one path contributions, `N_rx x N_tx`.
pub fn gen_geometric_channel<R: Rng + ?Sized>(
    rng: &mut R,
    rx: &UpaGeometry,
    tx: &UpaGeometry,
    spec: &GeometricChannelSpec,
) -> Result<CMat> {
    rx.validate()?;
    tx.validate()?;
    let (nr, nt) = (rx.num_elems(), tx.num_elems());
    spec.validate(nr, nt)?;
    let means = MeanAngles::draw(rng);
    let mut a = CMat::zeros(nr, nt);
    for _ in 0..spec.num_paths {
        let p = draw_path(rng, spec, &means);
        let ar = array_response(rx, p.az_arr, p.el_arr)?;
        let at = array_response(tx, p.az_dep, p.el_dep)?;
        a.gerc(p.gain, &ar, &at, c(1.0, 0.0));
    }
    let scale = (nr as f64 * nt as f64 / spec.num_paths as f64).sqrt();
    Ok(a * c(scale, 0.0))
}

/// Replaces the singular values of `a` with a log-spaced ramp of condition
/// number `kappa`, scaled so the squared Frobenius norm is rows * cols.
pub fn recondition(a: &CMat, kappa: f64) -> Result<CMat> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    if frob_sq(a) == 0.0 {
        return Err(invalid("cannot recondition a zero matrix"));
    }
    let d = svd(a);
    let k = d.singular_values.len();
    let ramp: Vec<f64> = (0..k)
        .map(|i| {
            let frac = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
            kappa.powf(-frac)
        })
        .collect();
    let energy: f64 = ramp.iter().map(|s| s * s).sum();
    let scale = ((a.nrows() * a.ncols()) as f64 / energy).sqrt();
    let mut us = d.u.clone();
    for (j, s) in ramp.iter().enumerate() {
        let mut col = us.column_mut(j);
        col *= c(s * scale, 0.0);
    }
    Ok(us * d.v.adjoint())
}

/// Antenna layout of the three terminals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    /// Access point, M elements.
    pub ap: UpaGeometry,
    /// User, N elements.
    pub user: UpaGeometry,
    /// Intelligent surface, L elements.
    pub lis: UpaGeometry,
}

impl ArrayLayout {
    pub fn near_square(m: usize, n: usize, l: usize, ap_spacing: f64) -> Result<Self> {
        Ok(ArrayLayout {
            ap: UpaGeometry::near_square(m, ap_spacing)?,
            user: UpaGeometry::near_square(n, 0.5)?,
            lis: UpaGeometry::near_square(l, 0.5)?,
        })
    }

    /// (M, N, L)
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.ap.num_elems(),
            self.user.num_elems(),
            self.lis.num_elems(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpecs {
    pub z: GeometricChannelSpec,
    pub h: GeometricChannelSpec,
    pub g: GeometricChannelSpec,
}

/// Ground-truth (or estimated) channels.
///
/// `h` is the AP-surface channel (M x L), `g` the surface-user channel
/// (L x N) and `z` the direct channel stored in downlink orientation (N x M).
/// The uplink operators acting on user pilots are `h * diag * g` and `z^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTriple {
    pub h: CMat,
    pub g: CMat,
    pub z: CMat,
}

impl ChannelTriple {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h.nrows(), self.g.ncols(), self.h.ncols())
    }

    pub fn direct_uplink(&self) -> CMat {
        self.z.transpose()
    }
}

const RANK_TOL: f64 = 1e-10;
const RANK_RETRIES: usize = 16;

fn gen_with_targets<R: Rng + ?Sized>(
    rng: &mut R,
    rx: &UpaGeometry,
    tx: &UpaGeometry,
    spec: &GeometricChannelSpec,
) -> Result<CMat> {
    let mut a = gen_geometric_channel(rng, rx, tx, spec)?;
    if let Some(r) = spec.target_rank {
        let mut tries = 1;
        while numerical_rank(&a, RANK_TOL) < r {
            if tries >= RANK_RETRIES {
                return Err(crate::error::Error::RetriesExhausted {
                    what: "channel rank target",
                    attempts: tries,
                });
            }
            a = gen_geometric_channel(rng, rx, tx, spec)?;
            tries += 1;
        }
        if numerical_rank(&a, RANK_TOL) > r {
            a = crate::completion::hard_threshold_rank(&a, r);
        }
    }
    if let Some(kappa) = spec.target_condition {
        a = recondition(&a, kappa)?;
    }
    Ok(a)
}

/// Draws Z, H and G for one realization.
pub fn gen_channel_set<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &ArrayLayout,
    specs: &ChannelSpecs,
) -> Result<ChannelTriple> {
    let z = gen_with_targets(rng, &layout.user, &layout.ap, &specs.z)?;
    let h = gen_with_targets(rng, &layout.ap, &layout.lis, &specs.h)?;
    let g = gen_with_targets(rng, &layout.lis, &layout.user, &specs.g)?;
    Ok(ChannelTriple { h, g, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, singular_values};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(w: usize, h: usize) -> UpaGeometry {
        UpaGeometry::new(w, h, 0.5).unwrap()
    }

    #[test]
    fn single_element_response() {
        let a = array_response(&geom(1, 1), 0.7, 1.3).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn broadside_response_is_flat() {
        let a = array_response(&geom(2, 2), 0.0, PI / 2.0).unwrap();
        for z in a.iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn response_matches_scalar_loop() {
        let g = geom(4, 2);
        let (az, el) = (0.3f64, 1.1f64);
        let a = array_response(&g, az, el).unwrap();
        let mut idx = 0;
        for m in 0..4 {
            for n in 0..2 {
                let ph = 2.0 * PI * 0.5 * (m as f64 * az.sin() * el.sin() + n as f64 * el.cos());
                let want = Complex64::new(ph.cos(), ph.sin()) / 8f64.sqrt();
                assert!((a[idx] - want).norm() < 1e-14);
                idx += 1;
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(UpaGeometry::new(0, 3, 0.5).is_err());
        assert!(UpaGeometry::new(2, 3, 0.0).is_err());
        assert!(array_response(&geom(2, 2), f64::NAN, 0.0).is_err());
    }

    #[test]
    fn near_square_factors() {
        let g = UpaGeometry::near_square(32, 0.5).unwrap();
        assert_eq!((g.width_elems, g.height_elems), (8, 4));
        let g = UpaGeometry::near_square(64, 4.0).unwrap();
        assert_eq!((g.width_elems, g.height_elems), (8, 8));
        let g = UpaGeometry::near_square(7, 0.5).unwrap();
        assert_eq!((g.width_elems, g.height_elems), (7, 1));
    }

    #[test]
    fn zero_spread_paths_share_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = GeometricChannelSpec::new(4, 0.0);
        let means = MeanAngles::draw(&mut rng);
        for _ in 0..10 {
            let p = draw_path(&mut rng, &spec, &means);
            assert_eq!(p.az_arr, means.az_arr);
            assert_eq!(p.el_dep, means.el_dep);
        }
    }

    #[test]
    fn path_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = GeometricChannelSpec::new(1, 10.0);
        let means = MeanAngles::draw(&mut rng);
        let n = 20_000;
        let mut gain_pow = 0.0;
        let mut off_sq = 0.0;
        for _ in 0..n {
            let p = draw_path(&mut rng, &spec, &means);
            gain_pow += p.gain.norm_sqr();
            off_sq += (p.az_arr - means.az_arr).powi(2);
        }
        let var = gain_pow / n as f64;
        let sd = (off_sq / n as f64).sqrt();
        assert!((var - 1.0).abs() < 0.05, "gain variance {var}");
        let want = 10f64.to_radians();
        assert!((sd / want - 1.0).abs() < 0.05, "angle std {sd}");
    }

    #[test]
    fn single_path_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = GeometricChannelSpec::new(1, 10.0);
        let a = gen_geometric_channel(&mut rng, &geom(4, 2), &geom(2, 2), &spec).unwrap();
        assert_eq!(numerical_rank(&a, 1e-10), 1);
    }

    #[test]
    fn mean_energy_matches_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = GeometricChannelSpec::new(8, 10.0);
        let (rx, tx) = (geom(4, 2), geom(2, 3));
        let trials = 1000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += frob_sq(&gen_geometric_channel(&mut rng, &rx, &tx, &spec).unwrap());
        }
        let ratio = acc / trials as f64 / 48.0;
        assert!((0.95..=1.05).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn wide_spread_reaches_full_path_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = GeometricChannelSpec::new(4, 60.0);
        let a = gen_geometric_channel(&mut rng, &geom(4, 2), &geom(2, 2), &spec).unwrap();
        assert_eq!(numerical_rank(&a, 1e-10), 4);
    }

    #[test]
    fn recondition_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = crate::linalg::crandn_matrix(&mut rng, 5, 3, 1.0);
        let b = recondition(&a, 1.0).unwrap();
        let s = singular_values(&b);
        assert!(s.iter().all(|x| (x - s[0]).abs() < 1e-12));
        assert!((frob_sq(&b) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn recondition_hand_check() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0)]));
        let b = recondition(&a, 2.0).unwrap();
        let s = singular_values(&b);
        let want = (16.0f64 / 5.0).sqrt();
        assert!((s[0] - want).abs() < 1e-12);
        assert!((s[1] - want / 2.0).abs() < 1e-12);
    }

    #[test]
    fn recondition_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = crate::linalg::crandn_matrix(&mut rng, 64, 64, 1.0);
        let b = recondition(&a, 100.0).unwrap();
        assert!((condition_number(&b) - 100.0).abs() < 1e-7);
        assert!(recondition(&a, 0.5).is_err());
        assert!(recondition(&CMat::zeros(2, 2), 2.0).is_err());
    }

    fn full_size_specs() -> ChannelSpecs {
        ChannelSpecs {
            z: GeometricChannelSpec::new(64, 10.0),
            h: GeometricChannelSpec {
                target_condition: Some(100.0),
                ..GeometricChannelSpec::new(64, 10.0)
            },
            g: GeometricChannelSpec {
                target_rank: Some(8),
                ..GeometricChannelSpec::new(8, 10.0)
            },
        }
    }

    #[test]
    fn channel_set_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = ArrayLayout::near_square(64, 64, 64, 0.5).unwrap();
        let t = gen_channel_set(&mut rng, &layout, &full_size_specs()).unwrap();
        assert_eq!(t.dims(), (64, 64, 64));
        assert_eq!(t.z.shape(), (64, 64));
        assert_eq!(numerical_rank(&t.g, 1e-10), 8);
        assert!((condition_number(&t.h) / 100.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_set_is_rank_one_and_deterministic() {
        let layout = ArrayLayout::near_square(2, 2, 2, 0.5).unwrap();
        let one = GeometricChannelSpec::new(1, 10.0);
        let specs = ChannelSpecs { z: one, h: one, g: one };
        let t1 = gen_channel_set(&mut ChaCha8Rng::seed_from_u64(9), &layout, &specs).unwrap();
        let t2 = gen_channel_set(&mut ChaCha8Rng::seed_from_u64(9), &layout, &specs).unwrap();
        assert_eq!(t1, t2);
        for m in [&t1.h, &t1.g, &t1.z] {
            assert_eq!(numerical_rank(m, 1e-10), 1);
        }
    }
}
