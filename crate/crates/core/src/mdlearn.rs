//! Model-driven learner: one trainable complex steering matrix `A` shared by an
//! LS-style transmitter `x ∝ (A* Aᵀ)⁻¹ A* b` and a matched-filter receiver
//! `g = softmax(|Aᴴ y| ⊙ b)`, `θ̂ = gᵀ θ_grid`.
//!
//! The differentiable pipeline runs on [`isac_gradtape`]; evaluation uses the
//! plain-number [`MdReceiver`], which computes only the in-sector bins.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use isac_gradtape::{Adam, AdamConfig, CVar, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{isac_combine, ridge, BeamTarget, DetectorOutput, SteeringGrid};
use crate::error::{IsacError, Result};
use crate::scenario::{
    complex_normal, sample_target_sector, steering_into, AngularSector, RadarArrays, ScenarioConfig, UlaGeometry, C64,
};

const MAGIC: &[u8; 4] = b"MDAS";
const VERSION: u32 = 1;
const DEG2: f64 = (180.0 / PI) * (180.0 / PI);

/// Trainable `K × N_grid` complex matrix, stored as real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableSteering {
    re: Tensor,
    im: Tensor,
    theta: Vec<f64>,
}

impl TrainableSteering {
    pub fn from_parts(re: Tensor, im: Tensor, theta: Vec<f64>) -> Result<Self> {
        if re.shape() != im.shape() || re.cols() != theta.len() {
            return Err(IsacError::InvalidInput(format!(
                "steering parts {:?}/{:?} for {} grid angles",
                re.shape(),
                im.shape(),
                theta.len()
            )));
        }
        if re.has_non_finite() || im.has_non_finite() {
            return Err(IsacError::InvalidInput("steering matrix has non-finite entries".into()));
        }
        Ok(Self { re, im, theta })
    }

    pub fn ideal(grid: &SteeringGrid) -> Self {
        let a = grid.matrix();
        Self {
            re: Tensor::from_fn(grid.k(), grid.n_grid(), |r, c| a[(r, c)].re),
            im: Tensor::from_fn(grid.k(), grid.n_grid(), |r, c| a[(r, c)].im),
            theta: grid.theta().to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.re.rows()
    }

    pub fn n_grid(&self) -> usize {
        self.theta.len()
    }

    pub fn re(&self) -> &Tensor {
        &self.re
    }

    pub fn im(&self) -> &Tensor {
        &self.im
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn entry(&self, r: usize, c: usize) -> C64 {
        C64::new(self.re.get(r, c), self.im.get(r, c))
    }

    pub fn on_tape<'t>(&self, tape: &'t Tape, trainable: bool) -> CVar<'t> {
        let (re, im) = (self.re.clone(), self.im.clone());
        if trainable {
            CVar::param(tape, re, im).expect("parts share a shape")
        } else {
            CVar::constant(tape, re, im).expect("parts share a shape")
        }
    }

    /// Binary mask (`1 × N_grid`) of the grid angles inside `sector`.
    pub fn sector_mask(&self, sector: &AngularSector) -> Result<BeamTarget> {
        sector_mask(&self.theta, sector)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (k, n) = (self.k(), self.n_grid());
        let mut out = Vec::with_capacity(16 + 16 * k * n);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, k as u32, n as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (re, im) in self.re.data().iter().zip(self.im.data()) {
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
        out
    }

    /// Parses the `MDAS` container; the grid is the uniform one over `[−π/2, π/2]`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(IsacError::Artifact("not an MDAS steering artifact".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (version, k, n) = (word(0), word(1) as usize, word(2) as usize);
        if version != VERSION {
            return Err(IsacError::Artifact(format!("unsupported MDAS version {version}")));
        }
        let expected = 16 + 16 * k * n;
        if bytes.len() != expected {
            return Err(IsacError::Artifact(format!(
                "MDAS payload is {} bytes, expected {expected} for K={k}, N_grid={n}",
                bytes.len()
            )));
        }
        let grid = SteeringGrid::new(k, n).map_err(|e| IsacError::Artifact(e.to_string()))?;
        let mut re = Vec::with_capacity(k * n);
        let mut im = Vec::with_capacity(k * n);
        for pair in bytes[16..].chunks_exact(16) {
            re.push(f64::from_le_bytes(pair[..8].try_into().unwrap()));
            im.push(f64::from_le_bytes(pair[8..].try_into().unwrap()));
        }
        Self::from_parts(Tensor::from_vec(k, n, re)?, Tensor::from_vec(k, n, im)?, grid.theta().to_vec())
            .map_err(|e| IsacError::Artifact(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| IsacError::MissingArtifact(format!("{}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

pub fn sector_mask(theta: &[f64], sector: &AngularSector) -> Result<BeamTarget> {
    let b: Vec<f64> = theta.iter().map(|&t| if sector.contains(t) { 1.0 } else { 0.0 }).collect();
    if b.iter().all(|&v| v == 0.0) {
        let [lo_deg, hi_deg] = sector.degrees();
        return Err(IsacError::SectorUnresolvable { lo_deg, hi_deg });
    }
    Ok(BeamTarget { b })
}

/// `A = A_ideal + ΔA` with `ΔA ~ CN(0, noise_std²)` entrywise, i.e. each part has
/// variance `noise_std² / 2`.
pub fn init_steering<R: Rng + ?Sized>(grid: &SteeringGrid, noise_std: f64, rng: &mut R) -> Result<TrainableSteering> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(IsacError::Config(format!("init noise std must be nonnegative, got {noise_std}")));
    }
    let mut a = TrainableSteering::ideal(grid);
    if noise_std > 0.0 {
        let var = noise_std * noise_std;
        for (re, im) in a.re.data_mut().iter_mut().zip(a.im.data_mut()) {
            let n = complex_normal(var, rng);
            *re += n.re;
            *im += n.im;
        }
    }
    Ok(a)
}

/// Softmax flavour of the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxOptions {
    /// Out-of-sector logits become `−1e9` instead of `0`.
    pub masked: bool,
    pub temperature: f64,
}

impl Default for SoftmaxOptions {
    fn default() -> Self {
        Self { masked: false, temperature: 1.0 }
    }
}

fn check_target(b: &BeamTarget, n: usize) -> Result<()> {
    if b.b.len() != n {
        return Err(IsacError::InvalidInput(format!("target has {} entries for {n} grid angles", b.b.len())));
    }
    if b.b.iter().all(|&v| v == 0.0) {
        return Err(IsacError::EmptyTarget);
    }
    Ok(())
}

/// Differentiable precoder `√E · x / ‖x‖` with `(A* Aᵀ + εI) x = A* b`, `ε = 1e−8 ‖A‖²_F / K`.
pub fn precoder_on_tape<'t>(a: CVar<'t>, b: &BeamTarget, e_tx: f64) -> Result<CVar<'t>> {
    let tape = a.tape();
    let [k, n] = a.shape();
    check_target(b, n)?;
    let conj = a.conj();
    let s = conj.matmul(a.t())?;
    // tr(A* Aᵀ) = ‖A‖²_F, kept on the tape so the ridge is differentiable too
    let eps = a.norm_sq()?.scale(ridge(1.0, k));
    let ridge_re = s.re.add(eps.mul(tape.constant(Tensor::identity(k)))?)?;
    let s = CVar::new(ridge_re, s.im)?;
    let rhs = conj.matmul_real(tape.constant(Tensor::column(b.b.clone())))?;
    let x = s.solve(rhs)?;
    let norm = x.norm_sq()?.sqrt();
    Ok(x.div_real(norm)?.scale(e_tx.sqrt()))
}

/// Differentiable estimator over a batch `Y` (`B × K`, one observation per row).
/// Returns the bin probabilities `g` (`B × N`) and `θ̂` (`B × 1`).
pub fn estimate_on_tape<'t>(
    a: CVar<'t>,
    y: CVar<'t>,
    mask: &BeamTarget,
    theta: &[f64],
    opts: SoftmaxOptions,
) -> Result<(Var<'t>, Var<'t>)> {
    let tape = a.tape();
    let n = a.shape()[1];
    check_target(mask, n)?;
    // rows of Y · conj(A) are (Aᴴ y)ᵀ
    let r = y.matmul(a.conj())?;
    let mut logits = r.abs()?.mask(&Tensor::row(mask.b.clone()))?;
    if opts.temperature != 1.0 {
        logits = logits.scale(1.0 / opts.temperature);
    }
    if opts.masked {
        let offset = Tensor::row(mask.b.iter().map(|&m| if m != 0.0 { 0.0 } else { -1e9 }).collect());
        logits = logits.add(tape.constant(offset))?;
    }
    let g = logits.softmax_rows()?;
    let theta_hat = g.matmul(tape.constant(Tensor::column(theta.to_vec())))?;
    Ok((g, theta_hat))
}

fn to_complex(v: &CVar<'_>) -> Vec<C64> {
    let (re, im) = (v.re.value(), v.im.value());
    re.data().iter().zip(im.data()).map(|(&r, &i)| C64::new(r, i)).collect()
}

/// `x = M(A) b` normalized to `E_tx`.
pub fn md_precoder(a: &TrainableSteering, b: &BeamTarget, e_tx: f64) -> Result<Vec<C64>> {
    let tape = Tape::new();
    let x = precoder_on_tape(a.on_tape(&tape, false), b, e_tx)?;
    Ok(to_complex(&x))
}

/// Single-observation estimate: `(g, θ̂)`.
pub fn md_estimate(
    a: &TrainableSteering,
    y: &[C64],
    mask: &BeamTarget,
    opts: SoftmaxOptions,
) -> Result<(Vec<f64>, f64)> {
    if y.len() != a.k() {
        return Err(IsacError::InvalidInput(format!("observation has {} entries, K={}", y.len(), a.k())));
    }
    let tape = Tape::new();
    let yv = CVar::constant(
        &tape,
        Tensor::row(y.iter().map(|z| z.re).collect()),
        Tensor::row(y.iter().map(|z| z.im).collect()),
    )?;
    let (g, theta_hat) = estimate_on_tape(a.on_tape(&tape, false), yv, mask, a.theta(), opts)?;
    Ok((g.value().into_vec(), theta_hat.item()))
}

/// Masked-max detector with the softmax angle estimate attached.
pub fn md_detect(
    a: &TrainableSteering,
    y: &[C64],
    mask: &BeamTarget,
    threshold: f64,
    opts: SoftmaxOptions,
) -> Result<(DetectorOutput, bool)> {
    check_target(mask, a.n_grid())?;
    let (_, theta_hat) = md_estimate(a, y, mask, opts)?;
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..a.n_grid() {
        let p: C64 = (0..a.k()).map(|r| a.entry(r, c).conj() * y[r]).sum();
        let s = p.norm() * mask.b[c];
        if s > best.1 {
            best = (c, s);
        }
    }
    let out = DetectorOutput { statistic: best.1, theta_hat, index: best.0 };
    Ok((out, out.decide(threshold)))
}

/// ISAC precoder from the shared matrix with `ρ = ω_r`.
pub fn md_isac_precoder(
    a: &TrainableSteering,
    target: &AngularSector,
    comm: &AngularSector,
    omega_r: f64,
    phi: f64,
    e_tx: f64,
) -> Result<Vec<C64>> {
    if !(0.0..=1.0).contains(&omega_r) {
        return Err(IsacError::InvalidInput(format!("ω_r must lie in [0, 1], got {omega_r}")));
    }
    let v_r = md_precoder(a, &a.sector_mask(target)?, e_tx)?;
    let v_c = md_precoder(a, &a.sector_mask(comm)?, e_tx)?;
    isac_combine(&v_r, &v_c, omega_r, phi, e_tx)
}

/// Fast receiver for evaluation: in-sector matched-filter magnitudes only,
/// with the out-of-sector softmax mass folded into constants.
#[derive(Debug, Clone)]
pub struct MdReceiver {
    k: usize,
    /// Conjugated in-sector columns, contiguous per grid angle.
    conj_cols: Vec<C64>,
    theta_in: Vec<f64>,
    range: Range<usize>,
    n_out: f64,
    theta_out_sum: f64,
    opts: SoftmaxOptions,
}

impl MdReceiver {
    pub fn new(a: &TrainableSteering, sector: &AngularSector, opts: SoftmaxOptions) -> Result<Self> {
        let mask = a.sector_mask(sector)?;
        let start = mask.b.iter().position(|&m| m != 0.0).unwrap();
        let end = start + mask.support();
        let k = a.k();
        let mut conj_cols = Vec::with_capacity(k * (end - start));
        for c in start..end {
            conj_cols.extend((0..k).map(|r| a.entry(r, c).conj()));
        }
        let theta_out_sum = a.theta()[..start].iter().chain(&a.theta()[end..]).sum();
        Ok(Self {
            k,
            conj_cols,
            theta_in: a.theta()[start..end].to_vec(),
            range: start..end,
            n_out: (a.n_grid() - (end - start)) as f64,
            theta_out_sum,
            opts,
        })
    }

    pub fn sense(&self, y: &[C64]) -> DetectorOutput {
        let mut mags = Vec::with_capacity(self.theta_in.len());
        let mut best = (0, f64::NEG_INFINITY);
        for (i, col) in self.conj_cols.chunks_exact(self.k).enumerate() {
            let p: C64 = col.iter().zip(y).map(|(a, y)| a * y).sum();
            let m = p.norm();
            if m > best.1 {
                best = (i, m);
            }
            mags.push(m);
        }
        let tau = self.opts.temperature;
        let shift = (best.1 / tau).max(0.0);
        let (mut num, mut den) = (0.0, 0.0);
        for (m, t) in mags.iter().zip(&self.theta_in) {
            let w = (m / tau - shift).exp();
            num += w * t;
            den += w;
        }
        if !self.opts.masked {
            let w = (-shift).exp();
            num += w * self.theta_out_sum;
            den += w * self.n_out;
        }
        DetectorOutput { statistic: best.1, theta_hat: num / den, index: self.range.start + best.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub softmax: SoftmaxOptions,
}

impl Default for MdTrainConfig {
    fn default() -> Self {
        Self { iterations: 5000, batch_size: 1024, lr: 1e-3, softmax: SoftmaxOptions::default() }
    }
}

/// Per-iteration training losses (mean squared angle error, degrees²).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub loss: Vec<f64>,
}

impl TrainReport {
    /// RMSE over the mean loss of a window of iterations.
    pub fn rmse_deg(&self, window: Range<usize>) -> f64 {
        let w = &self.loss[window];
        (w.iter().sum::<f64>() / w.len() as f64).sqrt()
    }
}

/// Radar batch with `t = 1`: `Y = (G_tx x) ⊙ G_rx + N`, built on the tape.
struct RadarBatch {
    g_tx: [Tensor; 2],
    g_rx: [Tensor; 2],
    noise: [Tensor; 2],
    theta: Tensor,
}

impl RadarBatch {
    fn sample<R: Rng + ?Sized>(
        arrays: &RadarArrays<'_>,
        sector: &AngularSector,
        cfg: &ScenarioConfig,
        batch: usize,
        rng: &mut R,
    ) -> Self {
        let k = arrays.tx.k();
        let mut g_tx = [Tensor::zeros(batch, k), Tensor::zeros(batch, k)];
        let mut g_rx = g_tx.clone();
        let mut noise = g_tx.clone();
        let mut theta = Tensor::zeros(batch, 1);
        let mut a_tx = vec![C64::new(0.0, 0.0); k];
        let mut a_rx = a_tx.clone();
        for b in 0..batch {
            let th = sector.sample(rng);
            let alpha = complex_normal(cfg.sigma_r2, rng);
            theta.set(b, 0, th);
            steering_into(arrays.tx, th, &mut a_tx);
            steering_into(&arrays.rx, th, &mut a_rx);
            for j in 0..k {
                let n = complex_normal(cfg.n0, rng);
                let r = alpha * a_rx[j];
                g_tx[0].set(b, j, a_tx[j].re);
                g_tx[1].set(b, j, a_tx[j].im);
                g_rx[0].set(b, j, r.re);
                g_rx[1].set(b, j, r.im);
                noise[0].set(b, j, n.re);
                noise[1].set(b, j, n.im);
            }
        }
        Self { g_tx, g_rx, noise, theta }
    }

    fn received<'t>(&self, tape: &'t Tape, x: CVar<'t>) -> Result<CVar<'t>> {
        let c = |t: &[Tensor; 2]| CVar::constant(tape, t[0].clone(), t[1].clone());
        let gain = c(&self.g_tx)?.matmul(x)?;
        Ok(gain.mul(c(&self.g_rx)?)?.add(c(&self.noise)?)?)
    }
}

/// Mean squared angle error (degrees²) of one training batch, on the tape.
pub fn md_batch_loss<'t, R: Rng + ?Sized>(
    a: CVar<'t>,
    theta: &[f64],
    arrays: &RadarArrays<'_>,
    sector: &AngularSector,
    scenario: &ScenarioConfig,
    batch: usize,
    opts: SoftmaxOptions,
    rng: &mut R,
) -> Result<Var<'t>> {
    let tape = a.tape();
    let mask = sector_mask(theta, sector)?;
    let x = precoder_on_tape(a, &mask, scenario.e_tx)?;
    let draws = RadarBatch::sample(arrays, sector, scenario, batch, rng);
    let y = draws.received(tape, x)?;
    let (_, theta_hat) = estimate_on_tape(a, y, &mask, theta, opts)?;
    let err = theta_hat.sub(tape.constant(draws.theta))?;
    Ok(err.square().mean().scale(DEG2))
}

/// Trains `A` for single-target angle estimation with a fresh random target
/// sector every iteration.
pub fn train_md<R: Rng + ?Sized>(
    init: TrainableSteering,
    cfg: &MdTrainConfig,
    scenario: &ScenarioConfig,
    geom: &UlaGeometry,
    rng: &mut R,
) -> Result<(TrainableSteering, TrainReport)> {
    if cfg.batch_size == 0 {
        return Err(IsacError::Config("batch size must be positive".into()));
    }
    if init.k() != geom.k() {
        return Err(IsacError::Config(format!("steering matrix has K={}, array has K={}", init.k(), geom.k())));
    }
    let arrays = RadarArrays::new(geom, scenario)?;
    let theta = init.theta.clone();
    let mut params = vec![init.re, init.im];
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params);
    let mut report = TrainReport::default();
    for it in 0..cfg.iterations {
        let sector = sample_target_sector(rng);
        let tape = Tape::new();
        let a = CVar::param(&tape, params[0].clone(), params[1].clone())?;
        let loss = md_batch_loss(a, &theta, &arrays, &sector, scenario, cfg.batch_size, cfg.softmax, rng)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(IsacError::Diverged(format!("MD loss {value} at iteration {it}")));
        }
        let grads = tape.backward(loss)?;
        let g = [grads.wrt(a.re), grads.wrt(a.im)];
        adam.step(&mut params, &g)?;
        report.loss.push(value);
        if (it + 1) % 500 == 0 {
            log::info!("md iteration {}: rmse {:.3}°", it + 1, value.sqrt());
        }
    }
    let [re, im]: [Tensor; 2] = params.try_into().expect("two parameter tensors");
    Ok((TrainableSteering::from_parts(re, im, theta)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{desired_beampattern, ls_beamformer};
    use crate::scenario::{perturb_geometry, presets};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_init_is_ideal() {
        let g = SteeringGrid::new(4, 12).unwrap();
        let a = init_steering(&g, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, TrainableSteering::ideal(&g));
    }

    #[test]
    fn init_noise_power() {
        let g = SteeringGrid::new(16, 500).unwrap();
        let a = init_steering(&g, 0.1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ideal = TrainableSteering::ideal(&g);
        let dev: f64 = a
            .re()
            .data()
            .iter()
            .zip(ideal.re().data())
            .chain(a.im().data().iter().zip(ideal.im().data()))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / (16.0 * 500.0);
        assert!((dev - 0.01).abs() < 0.001, "{dev}");
        let again = init_steering(&g, 0.1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn precoder_matches_ls_and_is_scale_free() {
        let g = SteeringGrid::new(16, 156).unwrap();
        let a = TrainableSteering::ideal(&g);
        let s = presets::test_target_sector();
        let mask = a.sector_mask(&s).unwrap();
        let x = md_precoder(&a, &mask, 1.0).unwrap();
        let ls = ls_beamformer(g.matrix(), &desired_beampattern(&s, &g, 16.0).unwrap(), 1.0).unwrap();
        let err = x.iter().zip(&ls).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-6, "{err}");
        let doubled = BeamTarget { b: mask.b.iter().map(|v| 2.0 * v).collect() };
        let x2 = md_precoder(&a, &doubled, 1.0).unwrap();
        assert!(x.iter().zip(&x2).all(|(u, v)| (u - v).norm() < 1e-12));
        assert!(matches!(md_precoder(&a, &BeamTarget { b: vec![0.0; 156] }, 1.0), Err(IsacError::EmptyTarget)));
    }

    #[test]
    fn literal_softmax_leaks_into_masked_bins() {
        let g = SteeringGrid::new(4, 12).unwrap();
        let a = TrainableSteering::ideal(&g);
        let mask = a.sector_mask(&presets::test_target_sector()).unwrap();
        let (probs, _) = md_estimate(&a, &[C64::new(0.0, 0.0); 4], &mask, SoftmaxOptions::default()).unwrap();
        assert!(probs.iter().all(|&p| (p - 1.0 / 12.0).abs() < 1e-15));
        let masked = SoftmaxOptions { masked: true, ..SoftmaxOptions::default() };
        let (probs, _) = md_estimate(&a, &[C64::new(0.0, 0.0); 4], &mask, masked).unwrap();
        let inside = mask.support() as f64;
        for (p, m) in probs.iter().zip(&mask.b) {
            let expect = if *m != 0.0 { 1.0 / inside } else { 0.0 };
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_estimate_hits_grid_angle() {
        let g = SteeringGrid::new(16, 156).unwrap();
        let a = TrainableSteering::ideal(&g);
        let s = presets::test_target_sector();
        let mask = a.sector_mask(&s).unwrap();
        let range = g.sector_range(&s).unwrap();
        let idx = (range.start + range.end) / 2;
        let y: Vec<C64> = g.column(idx).iter().map(|z| z * 50.0).collect();
        let (probs, theta_hat) = md_estimate(&a, &y, &mask, SoftmaxOptions::default()).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((theta_hat - g.theta()[idx]).abs() < g.step());
    }

    #[test]
    fn receiver_matches_tape_estimate() {
        let g = SteeringGrid::new(16, 156).unwrap();
        let a = init_steering(&g, 0.3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let s = presets::test_target_sector();
        let mask = a.sector_mask(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for masked in [false, true] {
            for temperature in [1.0, 3.0] {
                let opts = SoftmaxOptions { masked, temperature };
                let rx = MdReceiver::new(&a, &s, opts).unwrap();
                for _ in 0..20 {
                    let y: Vec<C64> = (0..16).map(|_| complex_normal(4.0, &mut rng)).collect();
                    let fast = rx.sense(&y);
                    let (slow, _) = md_detect(&a, &y, &mask, 0.0, opts).unwrap();
                    assert_eq!(fast.index, slow.index);
                    assert!((fast.statistic - slow.statistic).abs() < 1e-12 * slow.statistic);
                    assert!((fast.theta_hat - slow.theta_hat).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn isac_endpoints() {
        let g = SteeringGrid::new(8, 60).unwrap();
        let a = TrainableSteering::ideal(&g);
        let (t, c) = (presets::test_target_sector(), presets::comm_sector());
        let v1 = md_isac_precoder(&a, &t, &c, 1.0, 0.0, 1.0).unwrap();
        let xr = md_precoder(&a, &a.sector_mask(&t).unwrap(), 1.0).unwrap();
        assert!(v1.iter().zip(&xr).all(|(u, v)| (u - v).norm() < 1e-12));
        let v0 = md_isac_precoder(&a, &t, &c, 0.0, 0.0, 1.0).unwrap();
        let xc = md_precoder(&a, &a.sector_mask(&c).unwrap(), 1.0).unwrap();
        assert!(v0.iter().zip(&xc).all(|(u, v)| (u - v).norm() < 1e-12));
    }

    #[test]
    fn artifact_round_trip() {
        let g = SteeringGrid::new(4, 12).unwrap();
        let a = init_steering(&g, 0.5, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], b"MDAS");
        assert_eq!(bytes.len(), 16 + 16 * 4 * 12);
        // first entry is row 0, column 0, real then imaginary
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), a.entry(0, 0).re);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), a.entry(0, 1).im);
        assert_eq!(TrainableSteering::from_bytes(&bytes).unwrap(), a);
        assert!(TrainableSteering::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TrainableSteering::from_bytes(&bad).is_err());
    }

    #[test]
    fn zero_lr_leaves_matrix_untouched() {
        let g = SteeringGrid::new(4, 24).unwrap();
        let a = init_steering(&g, 0.3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let geom = perturb_geometry(4, 1.0 / 30.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let cfg = MdTrainConfig { iterations: 5, batch_size: 16, lr: 0.0, ..MdTrainConfig::default() };
        let (trained, report) =
            train_md(a.clone(), &cfg, &ScenarioConfig::default(), &geom, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(trained, a);
        assert_eq!(report.loss.len(), 5);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let g = SteeringGrid::new(4, 24).unwrap();
        let a = init_steering(&g, 0.3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let cfg = MdTrainConfig { iterations: 0, ..MdTrainConfig::default() };
        let (trained, _) = train_md(
            a.clone(),
            &cfg,
            &ScenarioConfig::default(),
            &UlaGeometry::ideal(4).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(trained, a);
    }
}
