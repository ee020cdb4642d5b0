//! Model-based benchmark: least-squares beampattern synthesis on an ideal
//! steering grid, trade-off beam combining, the grid MAPRT detector/estimator,
//! Gray-coded QAM and the maximum-likelihood symbol decoder.

use std::f64::consts::FRAC_PI_2;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::scenario::{steering_into, AngularSector, UlaGeometry, C64};

/// Angular grid over `[−π/2, π/2]` with the ideal steering matrix evaluated on it.
#[derive(Debug, Clone)]
pub struct SteeringGrid {
    theta: Vec<f64>,
    /// K × N_grid, column i is `a_ideal(θ_i)`.
    a: DMatrix<C64>,
}

impl SteeringGrid {
    pub fn new(k: usize, n_grid: usize) -> Result<Self> {
        if n_grid < k || n_grid < 2 {
            return Err(IsacError::Config(format!("grid needs at least K={k} (and 2) points, got {n_grid}")));
        }
        let geom = UlaGeometry::ideal(k)?;
        let step = 2.0 * FRAC_PI_2 / (n_grid - 1) as f64;
        let theta: Vec<f64> =
            (0..n_grid).map(|i| if i + 1 == n_grid { FRAC_PI_2 } else { -FRAC_PI_2 + i as f64 * step }).collect();
        let mut a = DMatrix::zeros(k, n_grid);
        for (i, &t) in theta.iter().enumerate() {
            let mut col = a.column_mut(i);
            steering_into(&geom, t, col.as_mut_slice());
        }
        Ok(Self { theta, a })
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_grid(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn step(&self) -> f64 {
        self.theta[1] - self.theta[0]
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn column(&self, i: usize) -> &[C64] {
        &self.a.as_slice()[i * self.k()..(i + 1) * self.k()]
    }

    /// Contiguous index range of grid angles inside `sector` (inclusive bounds).
    pub fn sector_range(&self, sector: &AngularSector) -> Result<Range<usize>> {
        let start = self.theta.partition_point(|&t| t < sector.lo());
        let end = self.theta.partition_point(|&t| t <= sector.hi());
        if start >= end {
            let [lo_deg, hi_deg] = sector.degrees();
            return Err(IsacError::SectorUnresolvable { lo_deg, hi_deg });
        }
        Ok(start..end)
    }
}

/// Desired beampattern over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamTarget {
    pub b: Vec<f64>,
}

impl BeamTarget {
    pub fn support(&self) -> usize {
        self.b.iter().filter(|&&v| v != 0.0).count()
    }
}

/// `[b]_i = passband` for grid angles inside the sector, `0` elsewhere.
pub fn desired_beampattern(sector: &AngularSector, grid: &SteeringGrid, passband: f64) -> Result<BeamTarget> {
    let range = grid.sector_range(sector)?;
    let mut b = vec![0.0; grid.n_grid()];
    b[range].fill(passband);
    Ok(BeamTarget { b })
}

fn normalize(mut x: Vec<C64>, e_tx: f64) -> Result<Vec<C64>> {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 1e-300 && norm.is_finite()) {
        return Err(IsacError::Singular { condition: f64::INFINITY });
    }
    let s = e_tx.sqrt() / norm;
    x.iter_mut().for_each(|z| *z *= s);
    Ok(x)
}

/// Ridge added to the normal matrix: `1e−8 · tr(S) / K`.
pub fn ridge(trace: f64, k: usize) -> f64 {
    1e-8 * trace / k as f64
}

/// `x = (A* Aᵀ + εI)⁻¹ A* b`, scaled to energy `E_tx`.
pub fn ls_beamformer(a: &DMatrix<C64>, b: &BeamTarget, e_tx: f64) -> Result<Vec<C64>> {
    if b.b.len() != a.ncols() {
        return Err(IsacError::InvalidInput(format!(
            "target has {} entries for a {}-column steering matrix",
            b.b.len(),
            a.ncols()
        )));
    }
    if b.b.iter().all(|&v| v == 0.0) {
        return Err(IsacError::EmptyTarget);
    }
    let k = a.nrows();
    let conj = a.map(|z| z.conj());
    let mut s = &conj * a.transpose();
    let eps = ridge(s.trace().re, k);
    for i in 0..k {
        s[(i, i)] += eps;
    }
    let bv = DVector::from_iterator(b.b.len(), b.b.iter().map(|&v| C64::new(v, 0.0)));
    let c = &conj * bv;
    let lu = s.clone().lu();
    let x = lu.solve(&c).ok_or_else(|| IsacError::Singular { condition: condition_estimate(&s) })?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(IsacError::Singular { condition: condition_estimate(&s) });
    }
    normalize(x.as_slice().to_vec(), e_tx)
}

/// Ratio of extreme singular values.
fn condition_estimate(s: &DMatrix<C64>) -> f64 {
    let sv = s.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `v = √E (√ρ x_r + √(1−ρ) e^{jφ} x_c) / ‖·‖`.
pub fn isac_combine(x_r: &[C64], x_c: &[C64], rho: f64, phi: f64, e_tx: f64) -> Result<Vec<C64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(IsacError::InvalidInput(format!("trade-off ρ must lie in [0, 1], got {rho}")));
    }
    if x_r.len() != x_c.len() {
        return Err(IsacError::InvalidInput("beams differ in length".into()));
    }
    let rot = C64::from_polar((1.0 - rho).sqrt(), phi);
    let sr = rho.sqrt();
    let v: Vec<C64> = x_r.iter().zip(x_c).map(|(r, c)| r * sr + c * rot).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm >= 1e-12) {
        return Err(IsacError::DestructiveCombination { norm });
    }
    normalize(v, e_tx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    pub statistic: f64,
    pub theta_hat: f64,
    /// Grid index of the peak.
    pub index: usize,
}

impl DetectorOutput {
    pub fn decide(&self, threshold: f64) -> bool {
        self.statistic > threshold
    }
}

/// `|a_iᴴ y|²` for every grid index in `range`.
pub fn matched_filter_powers<'a>(
    y: &'a [C64],
    grid: &'a SteeringGrid,
    range: Range<usize>,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    range.map(move |i| {
        let p: C64 = grid.column(i).iter().zip(y).map(|(a, y)| a.conj() * y).sum();
        (i, p.norm_sqr())
    })
}

/// Grid MAPRT: peak of `|a_idealᴴ(θ_i) y|²` over in-sector angles; ties go to the smaller index.
pub fn maprt(y: &[C64], grid: &SteeringGrid, sector: &AngularSector) -> Result<DetectorOutput> {
    let range = grid.sector_range(sector)?;
    Ok(maprt_in_range(y, grid, range, false))
}

/// As [`maprt`] on a precomputed index range, optionally refining the peak angle
/// by a parabola through the neighbouring powers.
pub fn maprt_in_range(y: &[C64], grid: &SteeringGrid, range: Range<usize>, refine: bool) -> DetectorOutput {
    let (lo, hi) = (range.start, range.end);
    let mut best = (lo, f64::NEG_INFINITY);
    let mut powers = Vec::with_capacity(if refine { hi - lo } else { 0 });
    for (i, p) in matched_filter_powers(y, grid, range) {
        if p > best.1 {
            best = (i, p);
        }
        if refine {
            powers.push(p);
        }
    }
    let (index, statistic) = best;
    let mut theta_hat = grid.theta()[index];
    if refine && index > lo && index + 1 < hi {
        let (l, c, r) = (powers[index - lo - 1], statistic, powers[index - lo + 1]);
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            let delta = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
            theta_hat += delta * grid.step();
        }
    }
    DetectorOutput { statistic, theta_hat, index }
}

/// Square Gray-coded QAM with unit average energy.
///
/// Message bits are split in half: the high half selects the in-phase level,
/// the low half the quadrature level. A Gray code `g` maps to the PAM level
/// `L − 1 − 2·gray⁻¹(g)`, so `m = 0` sits in the first quadrant corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
}

fn gray_inverse(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    pub fn qam(m: usize) -> Result<Self> {
        let side = (m as f64).sqrt().round() as usize;
        if m < 4 || side * side != m || !m.is_power_of_two() {
            return Err(IsacError::Config(format!("QAM size must be a square power of two, got {m}")));
        }
        let bits = side.trailing_zeros();
        let scale = 1.0 / (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
        let level = |code: usize| (side as f64 - 1.0) - 2.0 * gray_inverse(code) as f64;
        let points = (0..m)
            .map(|msg| {
                let i_code = msg >> bits;
                let q_code = msg & (side - 1);
                C64::new(level(i_code), level(q_code)) * scale
            })
            .collect();
        Ok(Self { points })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn encode(&self, m: usize) -> Result<C64> {
        self.points
            .get(m)
            .copied()
            .ok_or_else(|| IsacError::InvalidInput(format!("message {m} outside 0..{}", self.points.len())))
    }
}

pub fn qam_encode(m: usize, constellation: &Constellation) -> Result<C64> {
    constellation.encode(m)
}

/// `argmin_m |y − κ s(m)|²`; ties go to the smaller index.
pub fn mle_decode(y: C64, kappa: C64, constellation: &Constellation) -> usize {
    let mut best = (0, f64::INFINITY);
    for (m, s) in constellation.points().iter().enumerate() {
        let d = (y - kappa * s).norm_sqr();
        if d < best.1 {
            best = (m, d);
        }
    }
    best.0
}

/// Baseline ISAC precoder: LS beams for the target (height K) and comm sectors combined with `ρ`, `φ`.
pub fn baseline_precoder(
    grid: &SteeringGrid,
    target: &AngularSector,
    comm: &AngularSector,
    rho: f64,
    phi: f64,
    e_tx: f64,
) -> Result<Vec<C64>> {
    let k = grid.k() as f64;
    let x_r = ls_beamformer(grid.matrix(), &desired_beampattern(target, grid, k)?, e_tx)?;
    let x_c = ls_beamformer(grid.matrix(), &desired_beampattern(comm, grid, k)?, e_tx)?;
    isac_combine(&x_r, &x_c, rho, phi, e_tx)
}

/// `|a(θ_i)ᵀ v|²` over the grid.
pub fn beampattern(grid: &SteeringGrid, v: &[C64]) -> Vec<f64> {
    (0..grid.n_grid()).map(|i| grid.column(i).iter().zip(v).map(|(a, v)| a * v).sum::<C64>().norm_sqr()).collect()
}
