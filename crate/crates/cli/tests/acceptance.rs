//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Only
//! soundness problems (panics, errors, broken bookkeeping) abort the run; a
//! criterion whose measured value misses its target prints FAIL with the
//! numbers and the process still exits 0.
//!
//! Trains MD (5000 iterations) and the autoencoder (ω_r = 1) once each; a full
//! run takes several minutes in the optimized test profile.

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use isac_core::baseline::SteeringGrid;
use isac_core::harness::eval::{calibrate, heldout_pfa};
use isac_core::harness::{
    BaselineSystem, Experiment, ExperimentConfig, MdSystem, MetricsRecord, NnSystem, Transceiver,
};
use isac_core::selftest;

/// Criterion 1: gradient tolerance and wall-clock budget.
const GRAD_INSTANCES: usize = 100;
const GRAD_BUDGET_S: f64 = 60.0;
/// Criterion 3: held-out false-alarm band (3σ of a binomial at 2e5 draws).
const PFA_TARGET: f64 = 1e-2;
const PFA_BAND: f64 = 6.7e-4;
const PFA_HELDOUT: usize = 200_000;
const PFA_CALIBRATION: usize = 1_000_000;
/// Criterion 4.
const IDEAL_RMSE_DEG: (f64, f64) = (0.4, 2.6);
const IDEAL_SER: (f64, f64) = (7e-4, 4e-3);
/// Trade-off weight taken as the middle of the frontier.
const MID_FRONTIER: f64 = 0.4;
/// Criterion 5.
const IMPAIRMENT_RATIO: f64 = 1.5;
/// Criterion 6.
const MD_GAIN: f64 = 0.75;
/// Matched-P_md tolerance (relative) and the largest P_md considered.
const MATCH_REL: f64 = 0.2;
const MATCH_MAX_PMD: f64 = 0.5;
const INVARIANT_CASES: usize = 1000;
const SEED: u64 = 0;

fn report(n: usize, passed: bool, what: &str, detail: String) -> bool {
    println!("criterion {n:>2}  {}  {what}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

fn at(records: &[MetricsRecord], method: &str, omega: f64) -> MetricsRecord {
    records
        .iter()
        .find(|r| r.method == method && r.omega_r == omega)
        .unwrap_or_else(|| panic!("no {method} record at ω_r={omega}"))
        .clone()
}

fn rmse(r: &MetricsRecord) -> f64 {
    r.rmse_deg.unwrap_or(f64::INFINITY)
}

/// Learned/reference operating points whose miss rates agree within
/// `MATCH_REL`; among those, the one with the smallest learned `P_md`.
fn matched<'a>(
    learned: &[&'a MetricsRecord],
    reference: &[&'a MetricsRecord],
) -> Option<(&'a MetricsRecord, &'a MetricsRecord)> {
    let mut best: Option<(&MetricsRecord, &MetricsRecord)> = None;
    for &l in learned {
        for &r in reference {
            let ok = l.pmd <= MATCH_MAX_PMD
                && r.pmd <= MATCH_MAX_PMD
                && l.rmse_deg.is_some()
                && r.rmse_deg.is_some()
                && (l.pmd - r.pmd).abs() <= MATCH_REL * l.pmd.max(r.pmd);
            let better = match best {
                None => true,
                Some((bl, br)) => {
                    l.pmd < bl.pmd || (l.pmd == bl.pmd && (l.pmd - r.pmd).abs() < (bl.pmd - br.pmd).abs())
                }
            };
            if ok && better {
                best = Some((l, r));
            }
        }
    }
    best
}

fn of<'a>(records: &'a [MetricsRecord], method: &str) -> Vec<&'a MetricsRecord> {
    records.iter().filter(|r| r.method == method).collect()
}

fn describe(r: &MetricsRecord) -> String {
    format!("{} ω_r={} P_md={:.4} RMSE={:.3}°", r.method, r.omega_r, r.pmd, rmse(r))
}

fn check_bookkeeping(records: &[MetricsRecord]) {
    for r in records {
        assert!((0.0..=1.0).contains(&r.pmd) && (0.0..=1.0).contains(&r.pfa_emp) && (0.0..=1.0).contains(&r.ser));
        assert_eq!(r.rmse_deg.is_some(), r.n_detect > 0, "{r:?}");
        assert!(r.n_detect <= r.n_eval);
        assert!(r.rmse_deg.is_none_or(|v| v.is_finite() && v >= 0.0));
    }
}

fn main() {
    let mut passed = 0;
    let total = 10;

    // 1. gradients
    let start = Instant::now();
    let mut grads = isac_gradtape::selfcheck::primitive_suite(GRAD_INSTANCES);
    grads.push(selftest::md_pipeline_gradcheck(GRAD_INSTANCES));
    grads.push(selftest::nn_pipeline_gradcheck(GRAD_INSTANCES));
    let elapsed = start.elapsed().as_secs_f64();
    let worst = grads.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let ok = grads.iter().all(|g| g.passed() && g.instances == GRAD_INSTANCES) && elapsed < GRAD_BUDGET_S;
    passed += report(
        1,
        ok,
        "gradient soundness",
        format!(
            "{} checks × {GRAD_INSTANCES} instances, worst {} {:.2e} (< 1e-4), {elapsed:.1}s (< {GRAD_BUDGET_S}s)",
            grads.len(),
            worst.name,
            worst.max_rel_error
        ),
    ) as usize;

    // 2. oracle equivalence
    let o = selftest::oracle_agreement(1000, 2);
    passed += report(
        2,
        o.passed(),
        "ideal MD = baseline",
        format!(
            "argmax agreement {}/{}, precoder relative error {:.1e} (< 1e-6)",
            o.index_agreement, o.draws, o.precoder_rel_error
        ),
    ) as usize;

    // shared: impaired seed-0 experiment with trained MD and NN (ω_r = 1)
    let cfg = ExperimentConfig { seed: SEED, ..ExperimentConfig::default() };
    let exp = Experiment::new(cfg.clone()).expect("default experiment");
    let geometry = exp.geometry(SEED).expect("geometry");
    let t = Instant::now();
    let ((md, md_report), (nn, _)) = std::thread::scope(|s| {
        let md = s.spawn(|| exp.train_md(&geometry, SEED).expect("md training"));
        let nn = exp.train_nn(&geometry, 1.0, SEED).expect("nn training");
        (md.join().expect("md thread"), nn)
    });
    let n = md_report.loss.len();
    eprintln!(
        "(trained MD and NN in {:.0}s; MD training RMSE {:.3}° → {:.3}°)",
        t.elapsed().as_secs_f64(),
        md_report.rmse_deg(0..100.min(n)),
        md_report.rmse_deg(n.saturating_sub(100)..n)
    );

    // 3. calibration at ω_r = 1
    let mut ctx = exp.context(geometry.clone(), exp.target());
    ctx.n_calibration = PFA_CALIBRATION;
    let sc = exp.scenario();
    let grid = Arc::new(SteeringGrid::new(cfg.scenario.k, cfg.scenario.n_grid).unwrap());
    let systems: Vec<(&str, Box<dyn Transceiver>)> = vec![
        (
            "baseline",
            Box::new(
                BaselineSystem::new(grid, &ctx.target, &ctx.comm, 1.0, 0.0, sc.e_tx, sc.m, false).expect("baseline"),
            ),
        ),
        (
            "md",
            Box::new(MdSystem::new(&md, &ctx.target, &ctx.comm, 1.0, 0.0, sc.e_tx, sc.m, cfg.softmax()).expect("md")),
        ),
        ("nn", Box::new(NnSystem::new(nn.clone(), &ctx.target, &ctx.comm, sc.e_tx).expect("nn"))),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, sys) in &systems {
        let thr = calibrate(sys.as_ref(), &ctx, SEED).expect("calibration");
        let pfa = heldout_pfa(sys.as_ref(), &ctx, thr, PFA_HELDOUT, SEED).expect("held-out");
        ok &= (pfa - PFA_TARGET).abs() <= PFA_BAND;
        parts.push(format!("{name} {pfa:.5}"));
    }
    passed +=
        report(3, ok, "calibration", format!("held-out P_fa {} (target {PFA_TARGET} ± {PFA_BAND})", parts.join(", ")))
            as usize;

    // 4. ideal baseline
    let mut ideal_cfg = cfg.clone();
    ideal_cfg.scenario.sigma_lambda = 0.0;
    ideal_cfg.eval.omega_r = vec![0.0, MID_FRONTIER];
    let ideal_exp = Experiment::new(ideal_cfg).unwrap();
    let ideal = ideal_exp.sweep(&[isac_core::harness::Method::Baseline], None).expect("ideal sweep");
    check_bookkeeping(&ideal);
    let (mid, comm_only) = (at(&ideal, "baseline", MID_FRONTIER), at(&ideal, "baseline", 0.0));
    let ideal_rmse = rmse(&mid);
    passed += report(
        4,
        (IDEAL_RMSE_DEG.0..=IDEAL_RMSE_DEG.1).contains(&ideal_rmse) && (IDEAL_SER.0..=IDEAL_SER.1).contains(&comm_only.ser),
        "ideal baseline",
        format!(
            "RMSE {ideal_rmse:.3}° at ω_r={MID_FRONTIER} (in {IDEAL_RMSE_DEG:?}), SER {:.2e} at ω_r=0 (in {IDEAL_SER:?})",
            comm_only.ser
        ),
    ) as usize;

    // full impaired sweep, baseline and trained MD
    let sweep = exp
        .sweep(&[isac_core::harness::Method::Baseline, isac_core::harness::Method::Md], Some(&md))
        .expect("impaired sweep");
    check_bookkeeping(&sweep);

    // 5. impairment hurts the baseline
    let impaired_rmse = rmse(&at(&sweep, "baseline", MID_FRONTIER));
    let ratio = impaired_rmse / ideal_rmse;
    passed += report(
        5,
        ratio >= IMPAIRMENT_RATIO,
        "impaired baseline",
        format!("RMSE {impaired_rmse:.3}° vs ideal {ideal_rmse:.3}° at ω_r={MID_FRONTIER}: ratio {ratio:.2} (≥ {IMPAIRMENT_RATIO})"),
    ) as usize;

    // 6. MD beats the baseline
    let (md_pts, base_pts) = (of(&sweep, "md"), of(&sweep, "baseline"));
    passed += match matched(&md_pts, &base_pts) {
        Some((l, r)) => {
            let ratio = rmse(l) / rmse(r);
            report(
                6,
                ratio <= MD_GAIN,
                "MD vs baseline",
                format!("{} / {}: ratio {ratio:.3} (≤ {MD_GAIN})", describe(l), describe(r)),
            )
        }
        None => report(6, false, "MD vs baseline", "no operating points with matched P_md".into()),
    } as usize;

    // 7. MD beats NN
    let nn_rec = exp.evaluate_nn(&ctx_eval(&exp, &geometry), &nn, 1.0, SEED).expect("nn eval");
    check_bookkeeping(std::slice::from_ref(&nn_rec));
    passed += match matched(&md_pts, &[&nn_rec]) {
        Some((l, r)) => report(7, rmse(l) < rmse(r), "MD vs NN", format!("{} / {}", describe(l), describe(r))),
        None => report(7, false, "MD vs NN", format!("no MD point matches {}", describe(&nn_rec))),
    } as usize;

    // 8. generalization to an unseen sector
    let general = exp.generalization(&md, Some((&nn, 1.0)), &geometry, SEED).expect("generalization");
    check_bookkeeping(&general);
    let (gm, gb, gn) = (of(&general, "md"), of(&general, "baseline"), of(&general, "nn"));
    let vs_base = matched(&gm, &gb);
    let vs_nn = matched(&gm, &gn);
    let ok = vs_base.is_some_and(|(l, r)| rmse(l) < rmse(r)) && vs_nn.is_some_and(|(l, r)| rmse(l) < rmse(r));
    let show = |p: Option<(&MetricsRecord, &MetricsRecord)>, reference: &[&MetricsRecord]| match p {
        Some((l, r)) => format!("{} / {}", describe(l), describe(r)),
        None => format!("no MD point matches {}", reference.iter().map(|r| describe(r)).collect::<Vec<_>>().join(", ")),
    };
    passed +=
        report(8, ok, "generalization [−20°, 20°]", format!("{}; {}", show(vs_base, &gb), show(vs_nn, &gn))) as usize;

    // 9. sweep determinism through the binary
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("acceptance.toml");
    fs::write(
        &config,
        "seed = 3\n[scenario]\nk = 8\nn_grid = 100\n[train]\nmd_n_grid = 40\nmd_iterations = 200\nmd_batch_size = 128\n\
         nn_hidden = 8\nnn_iterations = 200\nnn_batch_size = 128\n[eval]\nn_eval = 20000\nn_calibration = 10000\n\
         omega_r = [0.0, 0.4, 1.0]\n",
    )
    .unwrap();
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("sweep{i}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_isac"))
                .args(["sweep", "--methods", "baseline,md,nn", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .env_remove("ISAC_SEED")
                .status()
                .expect("binary runs");
            assert!(status.success());
            fs::read(out).unwrap()
        })
        .collect();
    passed += report(
        9,
        outputs[0] == outputs[1] && !outputs[0].is_empty(),
        "sweep determinism",
        format!("two runs, {} bytes each, identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
    ) as usize;

    // 10. invariants
    let inv = selftest::invariant_suite(INVARIANT_CASES, 10);
    let failing: Vec<_> = inv.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    passed += report(
        10,
        failing.is_empty() && inv.iter().all(|c| c.cases >= INVARIANT_CASES),
        "invariants",
        format!(
            "{} properties × {INVARIANT_CASES} cases, failing: {}",
            inv.len(),
            if failing.is_empty() { "none".into() } else { failing.join(", ") }
        ),
    ) as usize;

    println!("acceptance: {passed}/{total} criteria passed");
}

fn ctx_eval(exp: &Experiment, geometry: &isac_core::scenario::UlaGeometry) -> isac_core::harness::EvalContext {
    exp.context(geometry.clone(), exp.target())
}
