//! Experiment orchestration: calibration, evaluation, sweeps and export.

pub mod config;
pub mod eval;
pub mod experiment;
pub mod export;
pub mod systems;

pub use config::ExperimentConfig;
pub use eval::{calibrate_threshold, evaluate, EvalContext, MetricsRecord, Transceiver};
pub use experiment::{Experiment, Method, SimulationSummary};
pub use systems::{BaselineSystem, MdSystem, NnSystem};
