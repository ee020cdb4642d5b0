//! Threshold calibration and Monte-Carlo evaluation of one operating point.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::DetectorOutput;
use crate::error::{IsacError, Result};
use crate::scenario::{
    simulate_comm, simulate_radar, simulate_radar_given, AngularSector, CommDraw, RadarDraw, ScenarioConfig,
    UlaGeometry, C64,
};
use crate::seeding::{substream, CALIBRATION_BASE, EVALUATION_BASE};

/// Draws per RNG substream; fixed so results do not depend on the thread count.
pub const CHUNK: usize = 4096;

/// One fully specified transmitter/receiver pair at a fixed trade-off point.
pub trait Transceiver: Sync {
    /// Unit-energy precoder scaled to `E_tx`.
    fn precoder(&self) -> &[C64];
    fn symbol(&self, m: usize) -> C64;
    fn sense(&self, draw: &RadarDraw) -> DetectorOutput;
    fn decode(&self, draw: &CommDraw) -> usize;
}

/// Everything about the world that an evaluation needs.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub scenario: ScenarioConfig,
    pub geometry: UlaGeometry,
    pub target: AngularSector,
    pub comm: AngularSector,
    pub n_eval: usize,
    pub n_calibration: usize,
    pub target_pfa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub omega_r: f64,
    pub threshold: f64,
    pub pfa_emp: f64,
    pub pmd: f64,
    pub ser: f64,
    /// Absent when no present target was detected.
    pub rmse_deg: Option<f64>,
    pub n_detect: u64,
    pub n_eval: u64,
    pub seed: u64,
}

/// Empirical `(1 − P_fa)` quantile with "higher" interpolation:
/// `sorted[⌈(n − 1)(1 − P_fa)⌉]`.
pub fn calibrate_threshold(statistics_h0: &[f64], target_pfa: f64) -> Result<f64> {
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(IsacError::Config(format!("target P_fa must lie in (0, 1), got {target_pfa}")));
    }
    let needed = (10.0 / target_pfa - 1e-9).ceil() as usize;
    if statistics_h0.len() < needed {
        return Err(IsacError::InsufficientSamples { got: statistics_h0.len(), needed });
    }
    if statistics_h0.iter().any(|s| s.is_nan()) {
        return Err(IsacError::Diverged("NaN detection statistic during calibration".into()));
    }
    Ok(upper_quantile(statistics_h0, target_pfa))
}

/// `sorted[⌈(n − 1)(1 − p)⌉]` without the sample-size requirement.
pub fn upper_quantile(samples: &[f64], p: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = ((sorted.len() - 1) as f64 * (1.0 - p) - 1e-9).ceil() as usize;
    sorted[pos.min(sorted.len() - 1)]
}

fn chunks(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c as u64, CHUNK.min(n - c * CHUNK))).collect()
}

/// Detection statistics of `n` target-free observations.
pub fn h0_statistics(system: &dyn Transceiver, ctx: &EvalContext, n: usize, seed: u64, base: u64) -> Result<Vec<f64>> {
    let parts: Result<Vec<Vec<f64>>> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = substream(seed, base + c);
            (0..len)
                .map(|_| {
                    let d = simulate_radar_given(
                        system.precoder(),
                        &ctx.geometry,
                        &ctx.target,
                        &ctx.scenario,
                        false,
                        &mut rng,
                    )?;
                    Ok(system.sense(&d).statistic)
                })
                .collect()
        })
        .collect();
    Ok(parts?.concat())
}

/// Threshold from `ctx.n_calibration` dedicated ℋ0 draws.
pub fn calibrate(system: &dyn Transceiver, ctx: &EvalContext, seed: u64) -> Result<f64> {
    let stats = h0_statistics(system, ctx, ctx.n_calibration, seed, CALIBRATION_BASE)?;
    calibrate_threshold(&stats, ctx.target_pfa)
}

/// Empirical false-alarm rate on `n` fresh ℋ0 draws (stream disjoint from calibration and evaluation).
pub fn heldout_pfa(system: &dyn Transceiver, ctx: &EvalContext, threshold: f64, n: usize, seed: u64) -> Result<f64> {
    let stats = h0_statistics(system, ctx, n, seed, 3 << 32)?;
    Ok(stats.iter().filter(|&&s| s > threshold).count() as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: u64,
    n_t1: u64,
    n_t0: u64,
    detected: u64,
    false_alarms: u64,
    symbol_errors: u64,
    sq_err_deg: f64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.n += o.n;
        self.n_t1 += o.n_t1;
        self.n_t0 += o.n_t0;
        self.detected += o.detected;
        self.false_alarms += o.false_alarms;
        self.symbol_errors += o.symbol_errors;
        self.sq_err_deg += o.sq_err_deg;
        self
    }
}

fn joint_draw(
    system: &dyn Transceiver,
    ctx: &EvalContext,
    threshold: f64,
    rng: &mut ChaCha8Rng,
    tally: &mut Tally,
) -> Result<()> {
    let m = rng.random_range(0..ctx.scenario.m);
    let s = system.symbol(m);
    let x: Vec<C64> = system.precoder().iter().map(|v| v * s).collect();
    let radar = simulate_radar(&x, &ctx.geometry, &ctx.target, &ctx.scenario, rng)?;
    let comm = simulate_comm(system.precoder(), s, &ctx.geometry, &ctx.comm, &ctx.scenario, rng)?;
    let out = system.sense(&radar);
    if out.statistic.is_nan() || out.theta_hat.is_nan() {
        return Err(IsacError::Diverged("NaN detector output".into()));
    }
    let detect = out.decide(threshold);
    tally.n += 1;
    match radar.theta {
        Some(theta) => {
            tally.n_t1 += 1;
            if detect {
                tally.detected += 1;
                tally.sq_err_deg += (out.theta_hat - theta).to_degrees().powi(2);
            }
        }
        None => {
            tally.n_t0 += 1;
            tally.false_alarms += detect as u64;
        }
    }
    tally.symbol_errors += (system.decode(&comm) != m) as u64;
    Ok(())
}

/// Calibrates the threshold, then runs `ctx.n_eval` joint radar/communication draws.
pub fn evaluate(
    system: &dyn Transceiver,
    ctx: &EvalContext,
    method: &str,
    omega_r: f64,
    seed: u64,
) -> Result<MetricsRecord> {
    let threshold = calibrate(system, ctx, seed)?;
    evaluate_with_threshold(system, ctx, method, omega_r, threshold, seed)
}

pub fn evaluate_with_threshold(
    system: &dyn Transceiver,
    ctx: &EvalContext,
    method: &str,
    omega_r: f64,
    threshold: f64,
    seed: u64,
) -> Result<MetricsRecord> {
    if ctx.n_eval == 0 {
        return Err(IsacError::Config("n_eval must be positive".into()));
    }
    let parts: Result<Vec<Tally>> = chunks(ctx.n_eval)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = substream(seed, EVALUATION_BASE + c);
            let mut tally = Tally::default();
            for _ in 0..len {
                joint_draw(system, ctx, threshold, &mut rng, &mut tally)?;
            }
            Ok(tally)
        })
        .collect();
    // in-order reduction keeps the float sums independent of scheduling
    let t = parts?.into_iter().fold(Tally::default(), Tally::merge);
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(MetricsRecord {
        method: method.to_string(),
        omega_r,
        threshold,
        pfa_emp: ratio(t.false_alarms, t.n_t0),
        pmd: ratio(t.n_t1 - t.detected, t.n_t1),
        ser: ratio(t.symbol_errors, t.n),
        rmse_deg: (t.detected > 0).then(|| (t.sq_err_deg / t.detected as f64).sqrt()),
        n_detect: t.detected,
        n_eval: t.n,
        seed,
    })
}
