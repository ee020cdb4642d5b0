//! Self-tests behind `isac check`: gradient checks of the primitives and of
//! both training pipelines, the ideal-matrix oracle agreement with the
//! baseline, and randomized structural invariants.
//!
//! The invariant properties are plain functions of their inputs so that the
//! proptest suite and the seeded runner here exercise the same code.

use std::f64::consts::{FRAC_PI_2, TAU};

use isac_gradtape::finite_diff::{central_gradient, max_relative_error};
use isac_gradtape::selfcheck::{primitive_suite, GradCheck, H, TOL};
use isac_gradtape::{CVar, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{baseline_precoder, isac_combine, ls_beamformer, maprt, mle_decode, Constellation, SteeringGrid};
use crate::mdlearn::{
    init_steering, md_batch_loss, md_detect, md_estimate, md_isac_precoder, md_precoder, SoftmaxOptions,
    TrainableSteering,
};
use crate::nnlearn::{
    ae_loss, angle_forward, beamformer_forward, comm_rx_forward, presence_forward, AeBatch, AeParams, Phase,
};
use crate::scenario::{
    complex_normal, energy, perturb_geometry, presets, simulate_radar, AngularSector, RadarArrays, ScenarioConfig,
    UlaGeometry, C64,
};

/// Relative-error floor for the MD loss, which is O(10²) deg².
const MD_FLOOR: f64 = 1e-3;
const NN_FLOOR: f64 = 1e-4;

fn random_sector(rng: &mut ChaCha8Rng, min_width_deg: f64, max_width_deg: f64) -> AngularSector {
    let w = rng.random_range(min_width_deg..max_width_deg);
    let lo = rng.random_range(-88.0..88.0 - w);
    AngularSector::from_degrees(lo, lo + w).expect("valid sector")
}

/// MD training loss (K=4, N_grid=12) over random matrices, sectors, geometries
/// and softmax variants.
pub fn md_pipeline_gradcheck(instances: usize) -> GradCheck {
    let sc = ScenarioConfig::default();
    let grid = SteeringGrid::new(4, 12).expect("grid");
    let mut rng = ChaCha8Rng::seed_from_u64(0x4D44);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let geom = perturb_geometry(4, 1.0 / 30.0, &mut rng).expect("geometry");
        let arrays = RadarArrays::new(&geom, &sc).expect("arrays");
        // wider than one grid step (16.4°) so the sector always resolves
        let sector = random_sector(&mut rng, 20.0, 60.0);
        let opts = SoftmaxOptions { masked: i % 2 == 1, temperature: rng.random_range(0.3..2.0) };
        let a = init_steering(&grid, 0.2f64.sqrt(), &mut rng).expect("init");
        let batch_seed: u64 = rng.random();
        let loss = |parts: &[Tensor]| {
            let tape = Tape::new();
            let av = CVar::param(&tape, parts[0].clone(), parts[1].clone()).expect("parts");
            md_batch_loss(av, a.theta(), &arrays, &sector, &sc, 8, opts, &mut ChaCha8Rng::seed_from_u64(batch_seed))
                .expect("loss")
                .item()
        };
        let parts = vec![a.re().clone(), a.im().clone()];
        let tape = Tape::new();
        let av = CVar::param(&tape, parts[0].clone(), parts[1].clone()).expect("parts");
        let l =
            md_batch_loss(av, a.theta(), &arrays, &sector, &sc, 8, opts, &mut ChaCha8Rng::seed_from_u64(batch_seed))
                .expect("loss");
        let g = tape.backward(l).expect("backward");
        let analytic = [g.wrt(av.re), g.wrt(av.im)];
        let numeric = central_gradient(loss, &parts, H);
        worst = worst.max(max_relative_error(&analytic, &numeric, MD_FLOOR));
    }
    GradCheck { name: "md_pipeline".into(), instances, max_rel_error: worst }
}

/// Whether the step `±H` crosses a ReLU kink: on a smooth function the
/// central difference barely moves when the step shrinks tenfold.
fn straddles_kink(f: &dyn Fn(&[Tensor]) -> f64, at: &[Tensor], numeric: &[Tensor]) -> bool {
    let fine = central_gradient(f, at, H / 10.0);
    max_relative_error(numeric, &fine, NN_FLOOR) > TOL
}

/// Full autoencoder loss (K=2, hidden width 3) over random parameters, phases,
/// trade-off weights and batches. The parameters are jittered off the zero
/// biases of the Glorot init; an instance whose finite-difference stencil still
/// straddles a ReLU kink is replaced by a fresh one.
pub fn nn_pipeline_gradcheck(instances: usize) -> GradCheck {
    let sc = ScenarioConfig::default();
    let comm = presets::comm_sector();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E4E);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    // bounded so a systematic mismatch cannot hide behind endless resampling
    for i in 0..2 * instances {
        if checked == instances {
            break;
        }
        let geom = perturb_geometry(2, 1.0 / 30.0, &mut rng).expect("geometry");
        let arrays = RadarArrays::new(&geom, &sc).expect("arrays");
        let batch = AeBatch::sample(&arrays, &comm, &sc, 6, &mut rng);
        let mut params = AeParams::glorot(2, sc.m, 3, &mut rng).expect("params");
        // Glorot biases are zero, which parks dead-row pre-activations exactly
        // on the ReLU kink where central differences are meaningless.
        let jittered: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::from_fn(t.rows(), t.cols(), |r, c| t.get(r, c) + rng.random_range(-0.1..0.1)))
            .collect();
        params.set_tensors(&jittered).expect("same layout");
        let phase = if i % 2 == 0 { Phase::Detection } else { Phase::Angle };
        let omega = [0.0, 0.3, 0.7, 1.0][(i / 2) % 4];
        let bce_all = i % 8 < 4;
        let eval = |ts: &[Tensor]| {
            let tape = Tape::new();
            let vars: Vec<_> = ts.iter().map(|t| tape.param(t.clone())).collect();
            ae_loss(&tape, &params, &vars, &batch, phase, omega, bce_all, sc.e_tx).expect("loss").total.item()
        };
        let tape = Tape::new();
        let vars: Vec<_> = jittered.iter().map(|t| tape.param(t.clone())).collect();
        let loss = ae_loss(&tape, &params, &vars, &batch, phase, omega, bce_all, sc.e_tx).expect("loss");
        let g = tape.backward(loss.total).expect("backward");
        let analytic: Vec<_> = vars.iter().map(|&v| g.wrt(v)).collect();
        let numeric = central_gradient(eval, &jittered, H);
        let e = max_relative_error(&analytic, &numeric, NN_FLOOR);
        if straddles_kink(&eval, &jittered, &numeric) {
            continue;
        }
        worst = worst.max(e);
        checked += 1;
    }
    if checked < instances {
        // too many kinks to be chance: report as a failure
        worst = f64::INFINITY;
    }
    GradCheck { name: "nn_pipeline".into(), instances: checked, max_rel_error: worst }
}

/// With the ideal matrix on an ideal array, the MD detector's peak index must
/// coincide with the baseline MAPRT's on every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAgreement {
    pub draws: usize,
    pub index_agreement: usize,
    /// Worst relative gap between `statistic_md²` and the MAPRT statistic.
    pub statistic_rel_error: f64,
    /// Worst relative distance between the MD precoder and the LS beamformer.
    pub precoder_rel_error: f64,
}

impl OracleAgreement {
    pub fn passed(&self) -> bool {
        self.index_agreement == self.draws && self.statistic_rel_error < 1e-9 && self.precoder_rel_error < 1e-6
    }
}

pub fn oracle_agreement(draws: usize, seed: u64) -> OracleAgreement {
    const K: usize = 16;
    let sc = ScenarioConfig::default();
    let grid = SteeringGrid::new(K, 156).expect("grid");
    let a = TrainableSteering::ideal(&grid);
    let geometry = UlaGeometry::ideal(K).expect("geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut precoder_rel_error: f64 = 0.0;
    let mut sectors = vec![presets::test_target_sector(), presets::comm_sector(), presets::generalization_sector()];
    sectors.extend((0..17).map(|_| random_sector(&mut rng, 5.0, 60.0)));
    for s in &sectors {
        let mask = a.sector_mask(s).expect("resolvable");
        let md = md_precoder(&a, &mask, 1.0).expect("precoder");
        let ls = ls_beamformer(grid.matrix(), &mask, 1.0).expect("ls");
        let err = md.iter().zip(&ls).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt() / energy(&ls).sqrt();
        precoder_rel_error = precoder_rel_error.max(err);
    }

    let target = presets::test_target_sector();
    let mask = a.sector_mask(&target).expect("resolvable");
    let v = baseline_precoder(&grid, &target, &presets::comm_sector(), 0.5, 0.0, 1.0).expect("precoder");
    let (mut index_agreement, mut statistic_rel_error) = (0, 0.0f64);
    for _ in 0..draws {
        let y = simulate_radar(&v, &geometry, &target, &sc, &mut rng).expect("draw").y_r;
        let (md, _) = md_detect(&a, &y, &mask, 0.0, SoftmaxOptions::default()).expect("detect");
        let reference = maprt(&y, &grid, &target).expect("maprt");
        index_agreement += (md.index == reference.index) as usize;
        statistic_rel_error = statistic_rel_error.max((md.statistic.powi(2) / reference.statistic - 1.0).abs());
    }
    OracleAgreement { draws, index_agreement, statistic_rel_error, precoder_rel_error }
}

/// Shared objects for the invariant properties.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub grid: SteeringGrid,
    pub md: TrainableSteering,
    pub nets: Vec<AeParams>,
}

impl Fixture {
    pub const K: usize = 8;

    pub fn new() -> Self {
        let grid = SteeringGrid::new(Self::K, 100).expect("grid");
        let md = init_steering(&grid, 0.2f64.sqrt(), &mut ChaCha8Rng::seed_from_u64(1)).expect("init");
        let nets = (0..4)
            .map(|s| AeParams::glorot(Self::K, 4, 7, &mut ChaCha8Rng::seed_from_u64(s)).expect("params"))
            .collect();
        Self { grid, md, nets }
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

pub type Property = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Property {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every precoder that exists carries exactly `E_tx`. Coinciding beams can
/// cancel and an all-dead ReLU layer yields no beam; both are reported as
/// errors rather than as wrongly scaled vectors.
#[allow(clippy::too_many_arguments)]
pub fn energy_budget(
    fx: &Fixture,
    target: &AngularSector,
    comm: &AngularSector,
    rho: f64,
    phi: f64,
    e_tx: f64,
    net: usize,
) -> Property {
    let check = |name: &str, v: crate::Result<Vec<C64>>| match v {
        Ok(v) => ensure((energy(&v) / e_tx - 1.0).abs() < 1e-9, || {
            format!("{name}: energy {} for budget {e_tx}", energy(&v))
        }),
        Err(_) => Ok(()),
    };
    check("baseline", baseline_precoder(&fx.grid, target, comm, rho, phi, e_tx))?;
    check("md", md_isac_precoder(&fx.md, target, comm, rho, phi, e_tx))?;
    check("nn", beamformer_forward(&fx.nets[net % fx.nets.len()], target, comm, e_tx))
}

/// Bin probabilities form a simplex and the estimate lies in the hull of the
/// eligible grid angles.
pub fn soft_argmax_simplex(fx: &Fixture, y: &[C64], sector: &AngularSector, opts: SoftmaxOptions) -> Property {
    let mask = fx.md.sector_mask(sector).map_err(|e| e.to_string())?;
    let (g, theta_hat) = md_estimate(&fx.md, y, &mask, opts).map_err(|e| e.to_string())?;
    ensure(g.iter().all(|&p| (0.0..=1.0).contains(&p)), || "probability outside [0, 1]".into())?;
    ensure((g.iter().sum::<f64>() - 1.0).abs() < 1e-9, || format!("probabilities sum to {}", g.iter().sum::<f64>()))?;
    let theta = fx.md.theta();
    let (lo, hi) = if opts.masked {
        let start = mask.b.iter().position(|&m| m != 0.0).expect("nonempty");
        (theta[start], theta[start + mask.support() - 1])
    } else {
        (theta[0], theta[theta.len() - 1])
    };
    ensure(theta_hat >= lo - 1e-9 && theta_hat <= hi + 1e-9, || format!("estimate {theta_hat} outside [{lo}, {hi}]"))
}

/// Presence in `[0, 1]`, angle in `[−π/2, π/2]`, receiver softmax on the simplex
/// and decoded indices inside the alphabet.
pub fn output_ranges(fx: &Fixture, y: &[C64], sector: &AngularSector, y_c: C64, kappa: C64, net: usize) -> Property {
    let p = &fx.nets[net % fx.nets.len()];
    let presence = presence_forward(p, y, sector);
    ensure((0.0..=1.0).contains(&presence), || format!("presence {presence}"))?;
    let angle = angle_forward(p, y, sector);
    ensure((-FRAC_PI_2..=FRAC_PI_2).contains(&angle), || format!("angle {angle}"))?;
    let probs = comm_rx_forward(p, y_c, kappa);
    ensure(probs.len() == p.m && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9, || {
        format!("receiver output {probs:?}")
    })?;
    for m in [4, 16, 64] {
        let c = Constellation::qam(m).map_err(|e| e.to_string())?;
        let d = mle_decode(y_c, kappa, &c);
        ensure(d < m, || format!("decoded {d} for M={m}"))?;
    }
    Ok(())
}

/// `ρ = 1` returns the radar beam and `ρ = 0` the phase-rotated comm beam, each
/// scaled to `E_tx`.
pub fn tradeoff_endpoints(x_r: &[C64], x_c: &[C64], phi: f64, e_tx: f64) -> Property {
    if energy(x_r) <= 1e-6 || energy(x_c) <= 1e-6 {
        return Ok(());
    }
    let unit = |x: &[C64], rot: C64| -> Vec<C64> {
        let n = energy(x).sqrt();
        x.iter().map(|z| z * rot * (e_tx.sqrt() / n)).collect()
    };
    let radar_only = isac_combine(x_r, x_c, 1.0, phi, e_tx).map_err(|e| e.to_string())?;
    let comm_only = isac_combine(x_r, x_c, 0.0, phi, e_tx).map_err(|e| e.to_string())?;
    let want_r = unit(x_r, C64::new(1.0, 0.0));
    let want_c = unit(x_c, C64::from_polar(1.0, phi));
    for (got, want) in radar_only.iter().zip(&want_r).chain(comm_only.iter().zip(&want_c)) {
        ensure((got - want).norm() < 1e-9 * (1.0 + want.norm()), || format!("{got} != {want}"))?;
    }
    Ok(())
}

/// The MAPRT peak and the MLE decision do not move under a common complex
/// scaling of the observation (and, for decoding, the channel).
pub fn scale_invariance(
    fx: &Fixture,
    y: &[C64],
    sector: &AngularSector,
    scale: C64,
    y_c: C64,
    kappa: C64,
    m: usize,
) -> Property {
    if scale.norm() <= 1e-3 || kappa.norm() <= 1e-3 {
        return Ok(());
    }
    let scaled: Vec<C64> = y.iter().map(|v| v * scale).collect();
    let a = maprt(y, &fx.grid, sector).map_err(|e| e.to_string())?;
    let b = maprt(&scaled, &fx.grid, sector).map_err(|e| e.to_string())?;
    ensure(a.index == b.index, || format!("peak moved from {} to {}", a.index, b.index))?;
    ensure((b.statistic / (a.statistic * scale.norm_sqr()) - 1.0).abs() < 1e-9, || {
        "statistic not quadratic in the scale".into()
    })?;
    let c = Constellation::qam(m).map_err(|e| e.to_string())?;
    ensure(mle_decode(y_c, kappa, &c) == mle_decode(y_c * scale, kappa * scale, &c), || {
        "decision moved under scaling".into()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn run_property(name: &'static str, cases: usize, mut prop: impl FnMut() -> Property) -> InvariantCheck {
    let mut failures = 0;
    let mut first_failure = None;
    for _ in 0..cases {
        if let Err(e) = prop() {
            failures += 1;
            first_failure.get_or_insert(e);
        }
    }
    InvariantCheck { name, cases, failures, first_failure }
}

/// Seeded random cases for each invariant.
pub fn invariant_suite(cases: usize, seed: u64) -> Vec<InvariantCheck> {
    let fx = Fixture::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = Fixture::K;
    fn cplx(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))
    }
    fn obs(rng: &mut ChaCha8Rng, k: usize) -> Vec<C64> {
        (0..k).map(|_| complex_normal(rng.random_range(0.01..100.0), rng)).collect()
    }
    vec![
        run_property("energy normalization", cases, || {
            let (t, c) = (random_sector(&mut rng, 4.0, 40.0), random_sector(&mut rng, 4.0, 40.0));
            let (rho, phi, e_tx) =
                (rng.random_range(0.0..=1.0), rng.random_range(0.0..TAU), rng.random_range(0.1..10.0));
            energy_budget(&fx, &t, &c, rho, phi, e_tx, rng.random_range(0..4))
        }),
        run_property("softmax simplex", cases, || {
            let y = obs(&mut rng, k);
            let s = random_sector(&mut rng, 4.0, 40.0);
            let opts = SoftmaxOptions { masked: rng.random_bool(0.5), temperature: rng.random_range(0.05..5.0) };
            soft_argmax_simplex(&fx, &y, &s, opts)
        }),
        run_property("output ranges", cases, || {
            let y = obs(&mut rng, k);
            let s = random_sector(&mut rng, 4.0, 40.0);
            output_ranges(&fx, &y, &s, cplx(&mut rng), cplx(&mut rng), rng.random_range(0..4))
        }),
        run_property("trade-off endpoints", cases, || {
            let (xr, xc) = (obs(&mut rng, k), obs(&mut rng, k));
            tradeoff_endpoints(&xr, &xc, rng.random_range(0.0..TAU), rng.random_range(0.1..10.0))
        }),
        run_property("argmax scale invariance", cases, || {
            let y = obs(&mut rng, k);
            let s = random_sector(&mut rng, 4.0, 40.0);
            let m = [4, 16, 64][rng.random_range(0..3)];
            scale_invariance(&fx, &y, &s, cplx(&mut rng), cplx(&mut rng), cplx(&mut rng), m)
        }),
    ]
}

/// One line of the self-test report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything `isac check` runs.
pub fn run_all() -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut grads = primitive_suite(100);
    grads.push(md_pipeline_gradcheck(100));
    grads.push(nn_pipeline_gradcheck(100));
    for g in grads {
        out.push(Outcome {
            passed: g.passed(),
            detail: format!(
                "max relative error {:.2e} over {} instances (tolerance {TOL:e})",
                g.max_rel_error, g.instances
            ),
            name: format!("gradient {}", g.name),
        });
    }
    let o = oracle_agreement(1000, 17);
    out.push(Outcome {
        name: "oracle md vs maprt".into(),
        passed: o.passed(),
        detail: format!(
            "{}/{} peak indices agree, statistic error {:.1e}, precoder error {:.1e}",
            o.index_agreement, o.draws, o.statistic_rel_error, o.precoder_rel_error
        ),
    });
    for inv in invariant_suite(1000, 23) {
        out.push(Outcome {
            name: format!("invariant {}", inv.name),
            passed: inv.passed(),
            detail: match &inv.first_failure {
                None => format!("{} cases", inv.cases),
                Some(e) => format!("{}/{} cases failed, first: {e}", inv.failures, inv.cases),
            },
        });
    }
    out
}
