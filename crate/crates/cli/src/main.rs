//! `isac` — simulate the scenario, train the learned transceivers, evaluate
//! them and run trade-off sweeps.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! numerical failures (singular systems, divergence).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use isac_core::harness::config::SEED_ENV;
use isac_core::harness::export::{export, Format};
use isac_core::harness::{Experiment, ExperimentConfig, Method, MetricsRecord};
use isac_core::mdlearn::TrainableSteering;
use isac_core::nnlearn::AeParams;
use isac_core::selftest;
use isac_core::IsacError;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Model-based vs. learned joint radar/communication transceivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Master seed; overrides both the config file and ISAC_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent array-impairment draws; overrides `[eval] geometry_seeds`.
    #[arg(long)]
    geometry_seeds: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw channel realizations with the baseline precoder and print summary statistics as JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        omega: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
    },
    /// Train a learned method and write its artifact.
    Train {
        #[command(flatten)]
        common: Common,
        /// md or nn
        #[arg(long)]
        method: Method,
        /// Trade-off weight for the autoencoder (ignored by md).
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate one method at the configured trade-off points.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        /// Trained artifact (required for nn; md trains from scratch when absent).
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Trade-off weight the nn artifact was trained for.
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// Output file; `.json` selects JSON, anything else CSV.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sweep the trade-off weights for several methods.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of baseline,md,nn.
        #[arg(long, value_delimiter = ',', default_value = "baseline,md")]
        methods: Vec<Method>,
        /// Pretrained md artifact to reuse instead of training.
        #[arg(long)]
        md_artifact: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the gradient, oracle and invariant self-tests, then validate the
    /// configuration and any given artifacts.
    Check {
        #[command(flatten)]
        common: Common,
        /// Only validate the configuration and artifacts.
        #[arg(long)]
        skip_selftest: bool,
        #[arg(long)]
        md_artifact: Option<PathBuf>,
        #[arg(long)]
        nn_artifact: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.override_seed(env.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.geometry_seeds {
        cfg.eval.geometry_seeds = n;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn write_records(records: &[MetricsRecord], out: &Path) -> Result<()> {
    export(records, out, Format::from_path(out)).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} rows to {}", records.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, omega, draws } => {
            if !(0.0..=1.0).contains(&omega) {
                return Err(IsacError::Config(format!("omega must lie in [0, 1], got {omega}")).into());
            }
            let exp = Experiment::new(load_config(&common)?)?;
            let summary = exp.simulate(omega, draws)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train { common, method, omega, out } => {
            let exp = Experiment::new(load_config(&common)?)?;
            let seed = exp.config().seed;
            let geometry = exp.geometry(seed)?;
            match method {
                Method::Md => {
                    let (a, report) = exp.train_md(&geometry, seed)?;
                    a.save(&out)?;
                    let n = report.loss.len();
                    if n > 0 {
                        println!(
                            "md: final RMSE {:.4}° (last 100 iterations)",
                            report.rmse_deg(n.saturating_sub(100)..n)
                        );
                    }
                }
                Method::Nn => {
                    if !(0.0..=1.0).contains(&omega) {
                        return Err(IsacError::Config(format!("omega must lie in [0, 1], got {omega}")).into());
                    }
                    let (params, report) = exp.train_nn(&geometry, omega, seed)?;
                    params.save(&out)?;
                    println!("nn: final losses phase 1 {:?}, phase 2 {:?}", report.phase1.last(), report.phase2.last());
                }
                Method::Baseline => {
                    return Err(IsacError::Config("the baseline has nothing to train".into()).into());
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { common, method, artifact, omega, out } => {
            let exp = Experiment::new(load_config(&common)?)?;
            let seed = exp.config().seed;
            let ctx = exp.context(exp.geometry(seed)?, exp.target());
            let records = match method {
                Method::Nn => {
                    let path = artifact.ok_or_else(|| IsacError::Config("eval --method nn needs --artifact".into()))?;
                    let params = AeParams::load(&path)?;
                    vec![exp.evaluate_nn(&ctx, &params, omega, seed)?]
                }
                Method::Md => {
                    let a = match artifact {
                        Some(path) => TrainableSteering::load(&path)?,
                        None => exp.train_md(&ctx.geometry, seed)?.0,
                    };
                    exp.sweep(&[Method::Md], Some(&a))?
                }
                Method::Baseline => exp.sweep(&[Method::Baseline], None)?,
            };
            write_records(&records, &out)?;
        }
        Command::Sweep { common, methods, md_artifact, out } => {
            let exp = Experiment::new(load_config(&common)?)?;
            let md = md_artifact.map(|p| TrainableSteering::load(&p)).transpose()?;
            let records = exp.sweep(&methods, md.as_ref())?;
            write_records(&records, &out)?;
        }
        Command::Check { common, skip_selftest, md_artifact, nn_artifact } => {
            let cfg = load_config(&common)?;
            if !skip_selftest {
                let outcomes = selftest::run_all();
                for o in &outcomes {
                    println!("{} {:<34} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                }
                let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
                if !failed.is_empty() {
                    return Err(IsacError::SelfTest(failed.join(", ")).into());
                }
            }
            let exp = Experiment::new(cfg)?;
            let k = exp.config().scenario.k;
            if let Some(p) = md_artifact {
                let a = TrainableSteering::load(&p)?;
                if a.k() != k {
                    return Err(IsacError::Config(format!("md artifact has K={}, config has K={k}", a.k())).into());
                }
                println!("md artifact ok: K={}, N_grid={}", a.k(), a.n_grid());
            }
            if let Some(p) = nn_artifact {
                let params = AeParams::load(&p)?;
                if params.k != k || params.m != exp.scenario().m {
                    return Err(IsacError::Config("nn artifact does not match the configured K and M".into()).into());
                }
                println!("nn artifact ok: K={}, M={}, hidden={}", params.k, params.m, params.hidden);
            }
            println!("config ok (seed {})", exp.config().seed);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<IsacError>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
