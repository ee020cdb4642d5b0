//! End-to-end experiments: geometry draw, training, trade-off sweeps and the
//! sector-generalization study.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::baseline::SteeringGrid;
use crate::error::{IsacError, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::eval::{evaluate, EvalContext, MetricsRecord};
use crate::harness::systems::{BaselineSystem, MdSystem, NnSystem};
use crate::mdlearn::{init_steering, train_md, TrainReport, TrainableSteering};
use crate::nnlearn::{train_nn, AeParams, NnTrainReport};
use crate::scenario::{
    energy, perturb_geometry, presets, simulate_comm, simulate_radar, AngularSector, ScenarioConfig, UlaGeometry,
};
use crate::seeding::{derive, substream, GEOMETRY, MD_INIT, MD_TRAIN, NN_TRAIN, SIMULATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline,
    Md,
    Nn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Md, Method::Nn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Md => "md",
            Method::Nn => "nn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| IsacError::Config(format!("unknown method {s:?} (expected baseline, md or nn)")))
    }
}

/// A validated configuration plus the derived scenario objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    scenario: ScenarioConfig,
    target: AngularSector,
    comm: AngularSector,
    grid: Arc<SteeringGrid>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            scenario: cfg.scenario_config()?,
            target: cfg.target_sector()?,
            comm: cfg.comm_sector()?,
            grid: Arc::new(SteeringGrid::new(cfg.scenario.k, cfg.scenario.n_grid)?),
            cfg,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn target(&self) -> AngularSector {
        self.target
    }

    pub fn comm(&self) -> AngularSector {
        self.comm
    }

    /// Master seed of geometry repetition `rep`; repetition 0 uses the master seed itself.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        if rep == 0 {
            self.cfg.seed
        } else {
            derive(self.cfg.seed, rep as u64)
        }
    }

    /// The (possibly impaired) array of the given seed.
    pub fn geometry(&self, seed: u64) -> Result<UlaGeometry> {
        let s = &self.cfg.scenario;
        if s.sigma_lambda == 0.0 {
            UlaGeometry::ideal(s.k)
        } else {
            perturb_geometry(s.k, s.sigma_lambda, &mut substream(seed, GEOMETRY))
        }
    }

    pub fn context(&self, geometry: UlaGeometry, target: AngularSector) -> EvalContext {
        EvalContext {
            scenario: self.scenario.clone(),
            geometry,
            target,
            comm: self.comm,
            n_eval: self.cfg.eval.n_eval,
            n_calibration: self.cfg.eval.n_calibration,
            target_pfa: self.cfg.eval.target_pfa,
        }
    }

    pub fn train_md(&self, geometry: &UlaGeometry, seed: u64) -> Result<(TrainableSteering, TrainReport)> {
        let grid = SteeringGrid::new(self.cfg.scenario.k, self.cfg.train.md_n_grid)?;
        let init = init_steering(&grid, self.cfg.train.init_noise_std, &mut substream(seed, MD_INIT))?;
        train_md(init, &self.cfg.md_train(), &self.scenario, geometry, &mut substream(seed, MD_TRAIN))
    }

    pub fn train_nn(&self, geometry: &UlaGeometry, omega_r: f64, seed: u64) -> Result<(AeParams, NnTrainReport)> {
        train_nn(&self.cfg.nn_train(omega_r), &self.scenario, geometry, &self.comm, &mut substream(seed, NN_TRAIN))
    }

    fn check_md(&self, a: &TrainableSteering) -> Result<()> {
        if a.k() != self.cfg.scenario.k {
            return Err(IsacError::Config(format!(
                "MD artifact has K={}, config has K={}",
                a.k(),
                self.cfg.scenario.k
            )));
        }
        Ok(())
    }

    fn check_nn(&self, p: &AeParams) -> Result<()> {
        if p.k != self.cfg.scenario.k || p.m != self.scenario.m {
            return Err(IsacError::Config(format!(
                "NN artifact has K={}, M={}; config has K={}, M={}",
                p.k, p.m, self.cfg.scenario.k, self.scenario.m
            )));
        }
        Ok(())
    }

    pub fn evaluate_baseline(&self, ctx: &EvalContext, omega_r: f64, seed: u64) -> Result<MetricsRecord> {
        let sys = BaselineSystem::new(
            self.grid.clone(),
            &ctx.target,
            &self.comm,
            omega_r,
            self.cfg.eval.phi,
            self.scenario.e_tx,
            self.scenario.m,
            self.cfg.scenario.refine_peak,
        )?;
        evaluate(&sys, ctx, Method::Baseline.name(), omega_r, seed)
    }

    pub fn evaluate_md(
        &self,
        ctx: &EvalContext,
        a: &TrainableSteering,
        omega_r: f64,
        seed: u64,
    ) -> Result<MetricsRecord> {
        self.check_md(a)?;
        let sys = MdSystem::new(
            a,
            &ctx.target,
            &self.comm,
            omega_r,
            self.cfg.eval.phi,
            self.scenario.e_tx,
            self.scenario.m,
            self.cfg.softmax(),
        )?;
        evaluate(&sys, ctx, Method::Md.name(), omega_r, seed)
    }

    pub fn evaluate_nn(&self, ctx: &EvalContext, params: &AeParams, omega_r: f64, seed: u64) -> Result<MetricsRecord> {
        self.check_nn(params)?;
        let sys = NnSystem::new(params.clone(), &ctx.target, &self.comm, self.scenario.e_tx)?;
        evaluate(&sys, ctx, Method::Nn.name(), omega_r, seed)
    }

    /// Trade-off sweep over the configured `ω_r` values for every geometry
    /// repetition. MD trains once per geometry (or uses `md`), the autoencoder
    /// retrains for every `ω_r`.
    pub fn sweep(&self, methods: &[Method], md: Option<&TrainableSteering>) -> Result<Vec<MetricsRecord>> {
        self.sweep_on(methods, md, self.target)
    }

    pub fn sweep_on(
        &self,
        methods: &[Method],
        md: Option<&TrainableSteering>,
        target: AngularSector,
    ) -> Result<Vec<MetricsRecord>> {
        if methods.is_empty() {
            return Err(IsacError::Config("no methods selected".into()));
        }
        let mut out = Vec::new();
        for rep in 0..self.cfg.eval.geometry_seeds {
            let seed = self.rep_seed(rep);
            let geometry = self.geometry(seed)?;
            let ctx = self.context(geometry.clone(), target);
            let trained_md;
            let a = match (methods.contains(&Method::Md), md) {
                (false, _) => None,
                (true, Some(a)) => Some(a),
                (true, None) => {
                    trained_md = self.train_md(&geometry, seed)?.0;
                    Some(&trained_md)
                }
            };
            for &omega_r in &self.cfg.eval.omega_r {
                for &method in methods {
                    let record = match method {
                        Method::Baseline => self.evaluate_baseline(&ctx, omega_r, seed)?,
                        Method::Md => self.evaluate_md(&ctx, a.expect("md steering available"), omega_r, seed)?,
                        Method::Nn => {
                            let (params, _) = self.train_nn(&geometry, omega_r, seed)?;
                            self.evaluate_nn(&ctx, &params, omega_r, seed)?
                        }
                    };
                    log::info!(
                        "{} ω_r={} P_md={:.4} SER={:.4} RMSE={:?}",
                        record.method,
                        omega_r,
                        record.pmd,
                        record.ser,
                        record.rmse_deg
                    );
                    out.push(record);
                }
            }
        }
        Ok(out)
    }

    /// Evaluates trained models on the unseen `[−20°, 20°]` sector.
    pub fn generalization(
        &self,
        md: &TrainableSteering,
        nn: Option<(&AeParams, f64)>,
        geometry: &UlaGeometry,
        seed: u64,
    ) -> Result<Vec<MetricsRecord>> {
        let ctx = self.context(geometry.clone(), presets::generalization_sector());
        let mut out = Vec::new();
        for &omega_r in &self.cfg.eval.omega_r {
            out.push(self.evaluate_baseline(&ctx, omega_r, seed)?);
            out.push(self.evaluate_md(&ctx, md, omega_r, seed)?);
        }
        if let Some((params, omega_r)) = nn {
            out.push(self.evaluate_nn(&ctx, params, omega_r, seed)?);
        }
        Ok(out)
    }

    /// Draws raw channel realizations with the baseline precoder at `ω_r` and
    /// summarizes their empirical statistics.
    pub fn simulate(&self, omega_r: f64, draws: usize) -> Result<SimulationSummary> {
        if draws == 0 {
            return Err(IsacError::Config("draws must be positive".into()));
        }
        let seed = self.cfg.seed;
        let geometry = self.geometry(seed)?;
        let sys = BaselineSystem::new(
            self.grid.clone(),
            &self.target,
            &self.comm,
            omega_r,
            self.cfg.eval.phi,
            self.scenario.e_tx,
            self.scenario.m,
            false,
        )?;
        use crate::harness::eval::Transceiver;
        let v = sys.precoder();
        let mut rng = substream(seed, SIMULATE);
        let (mut present, mut alpha2, mut beta2, mut noise_r, mut yr, mut yc) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let s = sys.symbol(rng.random_range(0..self.scenario.m));
            let x: Vec<_> = v.iter().map(|vi| vi * s).collect();
            let r = simulate_radar(&x, &geometry, &self.target, &self.scenario, &mut rng)?;
            let c = simulate_comm(v, s, &geometry, &self.comm, &self.scenario, &mut rng)?;
            if r.theta.is_some() {
                present += 1;
                alpha2 += r.alpha.norm_sqr();
            }
            noise_r += energy(&r.noise) / self.cfg.scenario.k as f64;
            yr += energy(&r.y_r);
            beta2 += c.beta.norm_sqr();
            yc += c.y_c.norm_sqr();
        }
        let n = draws as f64;
        Ok(SimulationSummary {
            seed,
            draws,
            omega_r,
            gaps: geometry.gaps().to_vec(),
            precoder_energy: energy(v),
            target_fraction: present as f64 / n,
            mean_alpha_sq: if present > 0 { alpha2 / present as f64 } else { 0.0 },
            mean_beta_sq: beta2 / n,
            mean_radar_noise_per_antenna: noise_r / n,
            mean_radar_energy: yr / n,
            mean_comm_energy: yc / n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub draws: usize,
    pub omega_r: f64,
    /// Inter-element gaps in wavelengths.
    pub gaps: Vec<f64>,
    pub precoder_energy: f64,
    pub target_fraction: f64,
    pub mean_alpha_sq: f64,
    pub mean_beta_sq: f64,
    pub mean_radar_noise_per_antenna: f64,
    pub mean_radar_energy: f64,
    pub mean_comm_energy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.k = 4;
        cfg.scenario.n_grid = 40;
        cfg.train.md_n_grid = 24;
        cfg.train.md_iterations = 3;
        cfg.train.md_batch_size = 16;
        cfg.train.nn_iterations = 4;
        cfg.train.nn_batch_size = 16;
        cfg.train.nn_hidden = 5;
        cfg.eval.n_eval = 2000;
        cfg.eval.n_calibration = 1000;
        cfg.eval.omega_r = vec![0.0, 1.0];
        cfg
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mle".parse::<Method>().is_err());
    }

    #[test]
    fn geometry_is_seeded() {
        let exp = Experiment::new(small()).unwrap();
        assert_eq!(exp.geometry(5).unwrap(), exp.geometry(5).unwrap());
        assert_ne!(exp.geometry(5).unwrap(), exp.geometry(6).unwrap());
        let mut ideal = small();
        ideal.scenario.sigma_lambda = 0.0;
        assert!(Experiment::new(ideal).unwrap().geometry(5).unwrap().is_ideal());
    }

    #[test]
    fn tiny_sweep_has_one_row_per_point() {
        let exp = Experiment::new(small()).unwrap();
        let rows = exp.sweep(&Method::ALL, None).unwrap();
        assert_eq!(rows.len(), 6);
        let names: Vec<_> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["baseline", "md", "nn", "baseline", "md", "nn"]);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.pmd) && (0.0..=1.0).contains(&r.ser));
            assert_eq!(r.n_eval, 2000);
        }
    }

    #[test]
    fn simulate_statistics() {
        let exp = Experiment::new(small()).unwrap();
        let s = exp.simulate(0.5, 4000).unwrap();
        assert!((s.precoder_energy - 1.0).abs() < 1e-9);
        assert!((s.target_fraction - 0.5).abs() < 0.05);
        assert!((s.mean_radar_noise_per_antenna - 1.0).abs() < 0.05);
        assert!((s.mean_beta_sq - 100.0).abs() < 10.0);
        assert_eq!(s.gaps.len(), 3);
    }
}
