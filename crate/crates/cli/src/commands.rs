//! Command-line surface.

use std::path::{Path, PathBuf};

use anyhow::Result;
use bnn_hmc::data::SplitSpec;
use clap::{Args, Parser, Subcommand};

use crate::config::{self, CompareSection, DataSource, EvalSection, ExperimentConfig, Kind, RhatSection, StoresSection};
use crate::runner::{self, read_store};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bnnhmc", version, about = "Full-batch HMC workbench for Bayesian neural networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for chains and sweep children.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run a sweep config.
    Sweep { config: PathBuf },
    /// Convergence diagnostics.
    #[command(subcommand)]
    Diag(Diag),
    /// Predictive evaluation.
    #[command(subcommand)]
    Eval(Eval),
    /// Agreement and total variation of a store against a reference store.
    Compare {
        store_ref: PathBuf,
        store: PathBuf,
        /// Classification container to evaluate on.
        #[arg(long)]
        data: PathBuf,
    },
    /// Posterior subspace scan config.
    Scan { config: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum Diag {
    /// Split-free R-hat over chains, one store per chain.
    Rhat {
        #[arg(required = true, num_args = 2..)]
        stores: Vec<PathBuf>,
        /// Container whose inputs are used for function-space R-hat.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Eval {
    /// Model average of a store on a classification container.
    Bma {
        store: PathBuf,
        data: PathBuf,
        /// Leading samples to drop.
        #[arg(long, default_value_t = 0)]
        skip: usize,
        /// Out-of-distribution container for AUC-ROC.
        #[arg(long)]
        ood: Option<PathBuf>,
    },
}

/// Problems with the command line or config; exit code 1.
struct UsageError(anyhow::Error);

fn container(path: PathBuf) -> DataSource {
    DataSource::Container {
        test_path: Some(path.clone()),
        path,
        split: SplitSpec::default(),
    }
}

fn load(path: &Path, g: &Global) -> Result<ExperimentConfig, UsageError> {
    let mut cfg = config::load_config(path).map_err(UsageError)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn build(cmd: &Command, g: &Global) -> Result<ExperimentConfig, UsageError> {
    let mut cfg = match cmd {
        Command::Run { config } => {
            let c = load(config, g)?;
            if c.kind.is_sweep() {
                return Err(UsageError(anyhow::anyhow!("kind `{}` is a sweep; use `bnnhmc sweep`", c.kind.name())));
            }
            c
        }
        Command::Sweep { config } => {
            let c = load(config, g)?;
            if !c.kind.is_sweep() {
                return Err(UsageError(anyhow::anyhow!("kind `{}` is not a sweep; use `bnnhmc run`", c.kind.name())));
            }
            c
        }
        Command::Scan { config } => {
            let c = load(config, g)?;
            if c.kind != Kind::SubspaceScan {
                return Err(UsageError(anyhow::anyhow!("`scan` needs kind `subspace_scan`, got `{}`", c.kind.name())));
            }
            c
        }
        Command::Diag(Diag::Rhat { stores, data }) => {
            let mut c = ExperimentConfig::new(Kind::Rhat);
            c.rhat = Some(RhatSection {
                stores: stores.clone(),
                function_space: data.is_some(),
            });
            c.data = data.clone().map(container);
            c
        }
        Command::Eval(Eval::Bma { store, data, skip, ood }) => {
            let mut c = ExperimentConfig::new(Kind::BmaEval);
            c.samples = Some(StoresSection {
                stores: vec![store.clone()],
                skip: *skip,
            });
            c.data = Some(container(data.clone()));
            c.eval = Some(EvalSection {
                ood_path: ood.clone(),
                ..EvalSection::default()
            });
            c.model = runner::model_from_store(&read_store(store).map_err(UsageError)?);
            if c.model.is_none() {
                return Err(UsageError(anyhow::anyhow!("{}: store does not record its model", store.display())));
            }
            c
        }
        Command::Compare { store_ref, store, data } => {
            let mut c = ExperimentConfig::new(Kind::Compare);
            c.compare = Some(CompareSection {
                reference: vec![store_ref.clone()],
                candidate: vec![store.clone()],
            });
            c.data = Some(container(data.clone()));
            c.model = runner::model_from_store(&read_store(store_ref).map_err(UsageError)?);
            if c.model.is_none() {
                return Err(UsageError(anyhow::anyhow!("{}: store does not record its model", store_ref.display())));
            }
            c
        }
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(UsageError)?;
    Ok(cfg)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.global.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let cfg = match build(&cli.command, &cli.global) {
        Ok(c) => c,
        Err(UsageError(e)) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let dir = cli.global.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| runner::default_out_dir(&cfg));
    match runner::run_experiment(&cfg, &dir) {
        Ok(m) => {
            println!("{} {}", m.status, dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("manifest: {}", dir.join("manifest.json").display());
            EXIT_RUNTIME
        }
    }
}
