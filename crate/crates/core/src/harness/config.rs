//! TOML experiment configuration with `[scenario]`, `[train]` and `[eval]` sections.
//!
//! Every field has a default matching the desk-scale experiments; unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::mdlearn::{MdTrainConfig, SoftmaxOptions};
use crate::nnlearn::NnTrainConfig;
use crate::scenario::{AngularSector, ScenarioConfig};

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "ISAC_SEED";

pub const DEFAULT_OMEGAS: [f64; 13] = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.15, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; geometry, training and evaluation use disjoint substreams of it.
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub k: usize,
    pub e_tx: f64,
    pub n0: f64,
    pub snr_r_db: f64,
    pub snr_c_db: f64,
    pub constellation_size: usize,
    pub target_sector_deg: [f64; 2],
    pub comm_sector_deg: [f64; 2],
    /// Element-spacing deviation in wavelengths; 0 gives the ideal array.
    pub sigma_lambda: f64,
    pub impair_rx: bool,
    /// Baseline grid size.
    pub n_grid: usize,
    pub refine_peak: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            k: 16,
            e_tx: 1.0,
            n0: 1.0,
            snr_r_db: 0.0,
            snr_c_db: 20.0,
            constellation_size: 4,
            target_sector_deg: [-40.0, -20.0],
            comm_sector_deg: [30.0, 50.0],
            sigma_lambda: 1.0 / 30.0,
            impair_rx: true,
            n_grid: 500,
            refine_peak: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub md_n_grid: usize,
    pub md_iterations: usize,
    pub md_batch_size: usize,
    pub lr: f64,
    /// Std of the complex perturbation added to the ideal steering matrix.
    pub init_noise_std: f64,
    pub masked_softmax: bool,
    pub temperature: f64,
    pub nn_hidden: usize,
    pub nn_iterations: usize,
    pub nn_batch_size: usize,
    pub bce_all_samples: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            md_n_grid: 156,
            md_iterations: 5000,
            md_batch_size: 1024,
            lr: 1e-3,
            init_noise_std: 0.2f64.sqrt(),
            masked_softmax: false,
            temperature: 1.0,
            nn_hidden: 21,
            nn_iterations: 10_000,
            nn_batch_size: 1024,
            bce_all_samples: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_eval: usize,
    pub n_calibration: usize,
    pub target_pfa: f64,
    pub omega_r: Vec<f64>,
    pub phi: f64,
    pub geometry_seeds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_eval: 200_000,
            n_calibration: 100_000,
            target_pfa: 1e-2,
            omega_r: DEFAULT_OMEGAS.to_vec(),
            phi: 0.0,
            geometry_seeds: 1,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn bad(msg: String) -> IsacError {
    IsacError::Config(msg)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a seed override given as text (e.g. from [`SEED_ENV`]).
    pub fn override_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed =
                v.trim().parse().map_err(|_| bad(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        self.scenario_config()?.validate()?;
        if s.k < 2 {
            return Err(bad(format!("k must be at least 2, got {}", s.k)));
        }
        if !(s.sigma_lambda >= 0.0 && s.sigma_lambda.is_finite()) {
            return Err(bad(format!("sigma_lambda must be nonnegative, got {}", s.sigma_lambda)));
        }
        if s.n_grid < s.k || self.train.md_n_grid < s.k {
            return Err(bad("grid sizes must be at least k".into()));
        }
        let t = &self.train;
        if t.md_batch_size == 0 || t.nn_batch_size == 0 || t.nn_hidden == 0 {
            return Err(bad("batch sizes and nn_hidden must be positive".into()));
        }
        if !(t.lr >= 0.0 && t.lr.is_finite()) || !(t.init_noise_std >= 0.0) || !(t.temperature > 0.0) {
            return Err(bad("lr and init_noise_std must be nonnegative, temperature positive".into()));
        }
        let e = &self.eval;
        if !(e.target_pfa > 0.0 && e.target_pfa < 1.0) {
            return Err(bad(format!("target_pfa must lie in (0, 1), got {}", e.target_pfa)));
        }
        let needed = (10.0 / e.target_pfa - 1e-9).ceil() as usize;
        if e.n_calibration < needed || e.n_eval < needed {
            return Err(bad(format!("n_calibration and n_eval must be at least 10/target_pfa = {needed}")));
        }
        if e.omega_r.is_empty() || e.omega_r.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(bad("omega_r must be a nonempty list of values in [0, 1]".into()));
        }
        if e.omega_r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("omega_r must be strictly increasing".into()));
        }
        if e.geometry_seeds == 0 {
            return Err(bad("geometry_seeds must be at least 1".into()));
        }
        if !(0.0..std::f64::consts::TAU).contains(&e.phi) {
            return Err(bad(format!("phi must lie in [0, 2π), got {}", e.phi)));
        }
        Ok(())
    }

    pub fn target_sector(&self) -> Result<AngularSector> {
        let [lo, hi] = self.scenario.target_sector_deg;
        AngularSector::from_degrees(lo, hi)
    }

    pub fn comm_sector(&self) -> Result<AngularSector> {
        let [lo, hi] = self.scenario.comm_sector_deg;
        AngularSector::from_degrees(lo, hi)
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let mut cfg = ScenarioConfig::from_snr_db(s.e_tx, s.n0, s.snr_r_db, s.snr_c_db, s.constellation_size);
        cfg.comm_sector = self.comm_sector()?;
        cfg.target_prior = self.target_sector()?;
        cfg.impair_rx = s.impair_rx;
        Ok(cfg)
    }

    pub fn softmax(&self) -> SoftmaxOptions {
        SoftmaxOptions { masked: self.train.masked_softmax, temperature: self.train.temperature }
    }

    pub fn md_train(&self) -> MdTrainConfig {
        MdTrainConfig {
            iterations: self.train.md_iterations,
            batch_size: self.train.md_batch_size,
            lr: self.train.lr,
            softmax: self.softmax(),
        }
    }

    pub fn nn_train(&self, omega_r: f64) -> NnTrainConfig {
        NnTrainConfig {
            omega_r,
            hidden: self.train.nn_hidden,
            iterations: self.train.nn_iterations,
            batch_size: self.train.nn_batch_size,
            lr: self.train.lr,
            bce_all_samples: self.train.bce_all_samples,
        }
    }
}
