//! Physical-layer ground truth: array geometry, prior sampling and the radar
//! and communication channels.
//!
//! Radar: `y_r = α a_rx(θ) a_tx(θ)ᵀ x + n` with `t ~ Bern(1/2)`,
//! `θ ~ U[sector]`, `α ~ CN(0, σ_r²)`, `n ~ CN(0, N0 I)`.
//! Communication: `y_c = β a_tx(ϑ)ᵀ v s + n` with `β ~ CN(0, σ_c²)`,
//! and the receiver knows `κ = β a_tx(ϑ)ᵀ v`.
//!
//! Angles are radians throughout; lengths are in wavelengths.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};

pub type C64 = Complex64;

/// Uniform (or perturbed) linear array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    gaps: Vec<f64>,
    wavelength: f64,
    /// Element positions in wavelengths, centered to zero mean.
    #[serde(skip)]
    positions: Vec<f64>,
}

impl UlaGeometry {
    pub fn ideal(k: usize) -> Result<Self> {
        Self::from_gaps(vec![0.5; k.saturating_sub(1)], 1.0).and_then(|g| {
            if k >= 2 {
                Ok(g)
            } else {
                Err(IsacError::Config(format!("array needs at least 2 elements, got {k}")))
            }
        })
    }

    pub fn from_gaps(gaps: Vec<f64>, wavelength: f64) -> Result<Self> {
        if gaps.is_empty() {
            return Err(IsacError::Config("array needs at least 2 elements".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(IsacError::Config(format!("wavelength must be positive, got {wavelength}")));
        }
        if let Some(g) = gaps.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(IsacError::Config(format!("element gaps must be positive, got {g}")));
        }
        let mut positions = Vec::with_capacity(gaps.len() + 1);
        positions.push(0.0);
        for g in &gaps {
            positions.push(positions.last().unwrap() + g / wavelength);
        }
        let mean = positions.iter().sum::<f64>() / positions.len() as f64;
        for p in &mut positions {
            *p -= mean;
        }
        Ok(Self { gaps, wavelength, positions })
    }

    pub fn k(&self) -> usize {
        self.gaps.len() + 1
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn is_ideal(&self) -> bool {
        self.gaps.iter().all(|&g| g == 0.5 * self.wavelength)
    }
}

/// `[a(θ)]_k = exp(−j2π p_k sin θ)` with `p_k` the centered element position in wavelengths.
pub fn steering_vector(geom: &UlaGeometry, theta: f64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); geom.k()];
    steering_into(geom, theta, &mut out);
    out
}

pub(crate) fn steering_into(geom: &UlaGeometry, theta: f64, out: &mut [C64]) {
    let s = theta.sin();
    for (o, &p) in out.iter_mut().zip(geom.positions()) {
        *o = C64::from_polar(1.0, -2.0 * PI * p * s);
    }
}

/// Draws gaps `d_k ~ N(λ/2, σ²)` independently, redrawing any gap that is not positive.
pub fn perturb_geometry<R: Rng + ?Sized>(k: usize, sigma_lambda: f64, rng: &mut R) -> Result<UlaGeometry> {
    if !(sigma_lambda >= 0.0 && sigma_lambda.is_finite()) {
        return Err(IsacError::Config(format!("spacing deviation must be nonnegative, got {sigma_lambda}")));
    }
    if sigma_lambda == 0.0 {
        return UlaGeometry::ideal(k);
    }
    let dist = Normal::new(0.5, sigma_lambda).map_err(|e| IsacError::Config(e.to_string()))?;
    let gaps = (0..k.saturating_sub(1))
        .map(|_| loop {
            let g = dist.sample(rng);
            if g > 0.0 {
                break g;
            }
        })
        .collect();
    UlaGeometry::from_gaps(gaps, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSector {
    lo: f64,
    hi: f64,
}

impl AngularSector {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        // small slack for degree → radian round-off at ±90°
        let eps = 1e-12;
        if !(lo.is_finite() && hi.is_finite() && -FRAC_PI_2 - eps <= lo && lo <= hi && hi <= FRAC_PI_2 + eps) {
            return Err(IsacError::Config(format!("sector [{lo}, {hi}] must satisfy -π/2 ≤ lo ≤ hi ≤ π/2")));
        }
        Ok(Self { lo: lo.max(-FRAC_PI_2), hi: hi.min(FRAC_PI_2) })
    }

    pub fn from_degrees(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo.to_radians(), hi.to_radians())
    }

    pub fn full() -> Self {
        Self { lo: -FRAC_PI_2, hi: FRAC_PI_2 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    /// `[lo, hi]` in degrees.
    pub fn degrees(&self) -> [f64; 2] {
        [self.lo.to_degrees(), self.hi.to_degrees()]
    }
}

/// Training prior over target sectors: midpoint `U[−60°, 60°]`, width `U[10°, 20°]`.
pub fn sample_target_sector<R: Rng + ?Sized>(rng: &mut R) -> AngularSector {
    let mean = rng.random_range(-60.0f64..=60.0).to_radians();
    let width = rng.random_range(10.0f64..=20.0).to_radians();
    AngularSector { lo: mean - 0.5 * width, hi: mean + 0.5 * width }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub e_tx: f64,
    pub n0: f64,
    pub sigma_r2: f64,
    pub sigma_c2: f64,
    /// Constellation size |𝓜|.
    pub m: usize,
    pub comm_sector: AngularSector,
    pub target_prior: AngularSector,
    /// Whether the radar receive array shares the transmit array's impairment.
    pub impair_rx: bool,
}

impl ScenarioConfig {
    pub fn from_snr_db(e_tx: f64, n0: f64, snr_r_db: f64, snr_c_db: f64, m: usize) -> Self {
        Self {
            e_tx,
            n0,
            sigma_r2: n0 * 10f64.powf(snr_r_db / 10.0),
            sigma_c2: n0 * 10f64.powf(snr_c_db / 10.0),
            m,
            comm_sector: presets::comm_sector(),
            target_prior: presets::test_target_sector(),
            impair_rx: true,
        }
    }

    pub fn snr_r(&self) -> f64 {
        self.sigma_r2 / self.n0
    }

    pub fn snr_c(&self) -> f64 {
        self.sigma_c2 / self.n0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(IsacError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("e_tx", self.e_tx)?;
        positive("n0", self.n0)?;
        positive("sigma_r2", self.sigma_r2)?;
        positive("sigma_c2", self.sigma_c2)?;
        positive("snr_r", self.snr_r())?;
        positive("snr_c", self.snr_c())?;
        let side = (self.m as f64).sqrt().round() as usize;
        if self.m < 4 || side * side != self.m || !self.m.is_power_of_two() {
            return Err(IsacError::Config(format!("constellation size must be a square power of two, got {}", self.m)));
        }
        Ok(())
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_snr_db(1.0, 1.0, 0.0, 20.0, 4)
    }
}

/// Named sectors used by the experiments.
pub mod presets {
    use super::AngularSector;

    /// Communication receiver sector `[30°, 50°]`.
    pub fn comm_sector() -> AngularSector {
        AngularSector::from_degrees(30.0, 50.0).expect("valid preset")
    }

    /// Target test sector `[−40°, −20°]`.
    pub fn test_target_sector() -> AngularSector {
        AngularSector::from_degrees(-40.0, -20.0).expect("valid preset")
    }

    /// Unseen generalization sector `[−20°, 20°]`.
    pub fn generalization_sector() -> AngularSector {
        AngularSector::from_degrees(-20.0, 20.0).expect("valid preset")
    }
}

/// `CN(0, σ²)`: independent real and imaginary parts with variance `σ²/2`.
pub fn complex_normal<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarDraw {
    pub t: bool,
    /// Angle of arrival; `None` when no target is present.
    pub theta: Option<f64>,
    pub alpha: C64,
    pub noise: Vec<C64>,
    pub y_r: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommDraw {
    pub vartheta: f64,
    pub beta: C64,
    pub noise: C64,
    pub y_c: C64,
    pub kappa: C64,
}

fn reject_nan(what: &str, v: &[C64]) -> Result<()> {
    if v.iter().any(|z| z.re.is_nan() || z.im.is_nan()) {
        return Err(IsacError::InvalidInput(format!("{what} contains NaN")));
    }
    Ok(())
}

/// Transmit and receive arrays of the monostatic radar.
#[derive(Debug, Clone)]
pub struct RadarArrays<'a> {
    pub tx: &'a UlaGeometry,
    pub rx: std::borrow::Cow<'a, UlaGeometry>,
}

impl<'a> RadarArrays<'a> {
    pub fn new(geom: &'a UlaGeometry, cfg: &ScenarioConfig) -> Result<Self> {
        let rx = if cfg.impair_rx {
            std::borrow::Cow::Borrowed(geom)
        } else {
            std::borrow::Cow::Owned(UlaGeometry::ideal(geom.k())?)
        };
        Ok(Self { tx: geom, rx })
    }
}

/// One radar observation with `t ~ Bern(1/2)`.
pub fn simulate_radar<R: Rng + ?Sized>(
    x: &[C64],
    geom: &UlaGeometry,
    sector: &AngularSector,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<RadarDraw> {
    let t = rng.random_bool(0.5);
    simulate_radar_given(x, geom, sector, cfg, t, rng)
}

/// One radar observation with the target presence fixed to `t`.
pub fn simulate_radar_given<R: Rng + ?Sized>(
    x: &[C64],
    geom: &UlaGeometry,
    sector: &AngularSector,
    cfg: &ScenarioConfig,
    t: bool,
    rng: &mut R,
) -> Result<RadarDraw> {
    reject_nan("transmit signal", x)?;
    if x.len() != geom.k() {
        return Err(IsacError::InvalidInput(format!(
            "transmit signal has {} entries for a {}-element array",
            x.len(),
            geom.k()
        )));
    }
    let arrays = RadarArrays::new(geom, cfg)?;
    let noise: Vec<C64> = (0..geom.k()).map(|_| complex_normal(cfg.n0, rng)).collect();
    if !t {
        return Ok(RadarDraw { t, theta: None, alpha: C64::new(0.0, 0.0), y_r: noise.clone(), noise });
    }
    let theta = sector.sample(rng);
    let alpha = complex_normal(cfg.sigma_r2, rng);
    let y_r = radar_echo(&arrays, theta, alpha, x, &noise);
    Ok(RadarDraw { t, theta: Some(theta), alpha, noise, y_r })
}

/// `α a_rx(θ) (a_tx(θ)ᵀ x) + n`.
pub fn radar_echo(arrays: &RadarArrays<'_>, theta: f64, alpha: C64, x: &[C64], noise: &[C64]) -> Vec<C64> {
    let a_tx = steering_vector(arrays.tx, theta);
    let a_rx = steering_vector(&arrays.rx, theta);
    let gain = alpha * a_tx.iter().zip(x).map(|(a, x)| a * x).sum::<C64>();
    a_rx.iter().zip(noise).map(|(a, n)| gain * a + n).collect()
}

/// One communication observation of symbol `s` sent on precoder `v`.
pub fn simulate_comm<R: Rng + ?Sized>(
    v: &[C64],
    s: C64,
    geom: &UlaGeometry,
    sector: &AngularSector,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<CommDraw> {
    reject_nan("precoder", v)?;
    reject_nan("symbol", &[s])?;
    if v.len() != geom.k() {
        return Err(IsacError::InvalidInput(format!(
            "precoder has {} entries for a {}-element array",
            v.len(),
            geom.k()
        )));
    }
    let vartheta = sector.sample(rng);
    let beta = complex_normal(cfg.sigma_c2, rng);
    let noise = complex_normal(cfg.n0, rng);
    let a = steering_vector(geom, vartheta);
    let kappa = beta * a.iter().zip(v).map(|(a, v)| a * v).sum::<C64>();
    Ok(CommDraw { vartheta, beta, noise, y_c: kappa * s + noise, kappa })
}

pub fn energy(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(&UlaGeometry::ideal(4).unwrap(), 0.0);
        assert!(a.iter().all(|z| close(*z, C64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn endfire_two_elements() {
        let a = steering_vector(&UlaGeometry::ideal(2).unwrap(), FRAC_PI_2);
        assert!(close(a[0], C64::new(0.0, 1.0), 1e-15));
        assert!(close(a[1], C64::new(0.0, -1.0), 1e-15));
    }

    #[test]
    fn ideal_matches_closed_form() {
        let k = 16;
        let geom = UlaGeometry::ideal(k).unwrap();
        for &deg in &[-90.0, -30.0, 0.0, 12.5, 71.0, 90.0] {
            let theta = f64::to_radians(deg);
            let a = steering_vector(&geom, theta);
            let power: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            assert!((power - 16.0).abs() < 1e-12);
            for (idx, z) in a.iter().enumerate() {
                let expect = C64::from_polar(1.0, -PI * (idx as f64 - (k as f64 - 1.0) / 2.0) * theta.sin());
                assert!(close(*z, expect, 1e-12));
            }
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(UlaGeometry::ideal(1).is_err());
        assert!(UlaGeometry::from_gaps(vec![0.5, -0.1], 1.0).is_err());
        assert!(UlaGeometry::ideal(8).unwrap().is_ideal());
    }

    #[test]
    fn zero_sigma_is_ideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_geometry(16, 0.0, &mut rng).unwrap(), UlaGeometry::ideal(16).unwrap());
    }

    #[test]
    fn perturbed_gap_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = perturb_geometry(100_001, 1.0 / 30.0, &mut rng).unwrap();
        let mean = g.gaps().iter().sum::<f64>() / g.gaps().len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean gap {mean}");
        let other = perturb_geometry(16, 1.0 / 30.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let again = perturb_geometry(16, 1.0 / 30.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_ne!(other.gaps(), again.gaps());
        let centered: f64 = other.positions().iter().sum();
        assert!(centered.abs() < 1e-12);
    }

    #[test]
    fn target_sector_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sample_target_sector(&mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_target_sector(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let (mut lo_mid, mut hi_mid) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let s = sample_target_sector(&mut rng);
            let w = s.width().to_degrees();
            assert!((10.0 - 1e-9..=20.0 + 1e-9).contains(&w), "width {w}");
            let m = s.midpoint().to_degrees();
            assert!((-60.0 - 1e-9..=60.0 + 1e-9).contains(&m));
            lo_mid = lo_mid.min(m);
            hi_mid = hi_mid.max(m);
            assert!(s.lo() >= -FRAC_PI_2 && s.hi() <= FRAC_PI_2);
        }
        assert!(lo_mid < -59.0 && hi_mid > 59.0);
    }

    #[test]
    fn absent_target_is_pure_noise() {
        let cfg = ScenarioConfig::default();
        let geom = UlaGeometry::ideal(16).unwrap();
        let x = vec![C64::new(0.25, 0.0); 16];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = simulate_radar_given(&x, &geom, &cfg.target_prior, &cfg, false, &mut rng).unwrap();
        assert_eq!(d.y_r, d.noise);
        assert!(d.theta.is_none());
    }

    #[test]
    fn present_target_echo_is_exact() {
        let cfg = ScenarioConfig { n0: 1e-300, ..ScenarioConfig::default() };
        let geom = perturb_geometry(16, 1.0 / 30.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let x: Vec<C64> = (0..16).map(|i| C64::from_polar(0.25, i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = simulate_radar_given(&x, &geom, &cfg.target_prior, &cfg, true, &mut rng).unwrap();
        let theta = d.theta.unwrap();
        assert!(cfg.target_prior.contains(theta));
        let a = steering_vector(&geom, theta);
        let ax: C64 = a.iter().zip(&x).map(|(a, x)| a * x).sum();
        for (y, ak) in d.y_r.iter().zip(&a) {
            assert!(close(*y, d.alpha * ak * ax, 1e-12));
        }
    }

    #[test]
    fn rejects_nan() {
        let cfg = ScenarioConfig::default();
        let geom = UlaGeometry::ideal(4).unwrap();
        let mut x = vec![C64::new(0.5, 0.0); 4];
        x[2].im = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_radar(&x, &geom, &cfg.target_prior, &cfg, &mut rng).is_err());
        assert!(simulate_comm(&x, C64::new(1.0, 0.0), &geom, &cfg.comm_sector, &cfg, &mut rng).is_err());
    }

    #[test]
    fn comm_model_identity_and_matched_gain() {
        let cfg = ScenarioConfig::default();
        let geom = UlaGeometry::ideal(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v: Vec<C64> = (0..16).map(|i| C64::from_polar(0.25, 0.3 * i as f64)).collect();
        let s = C64::new(-1.0, 1.0) / 2f64.sqrt();
        let d = simulate_comm(&v, s, &geom, &cfg.comm_sector, &cfg, &mut rng).unwrap();
        assert_eq!(d.y_c, d.kappa * s + d.noise);

        // matched beam v = √E a*(ϑ)/√K with β = 1 gives |κ| = √(K E)
        let vartheta = 0.6;
        let a = steering_vector(&geom, vartheta);
        let v: Vec<C64> = a.iter().map(|z| z.conj() / 4.0).collect();
        let kappa: C64 = a.iter().zip(&v).map(|(a, v)| a * v).sum();
        assert!((kappa.norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn draws_are_reproducible() {
        let cfg = ScenarioConfig::default();
        let geom = UlaGeometry::ideal(8).unwrap();
        let x = vec![C64::new(0.3, -0.1); 8];
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| simulate_radar(&x, &geom, &cfg.target_prior, &cfg, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }
}
