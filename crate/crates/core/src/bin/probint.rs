use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use probint::config::{ExperimentConfig, Overrides};
use probint::experiment::{self, exit_code};
use probint::{Error, MethodTag, SamplerMode};

#[derive(Parser)]
#[command(
    name = "probint",
    version,
    about = "Probabilistic linear multistep integrators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single forward solve
    Solve(Common),
    /// Monte Carlo ensemble with mean and standard-deviation bands
    Ensemble(Common),
    /// Grid search for the noise scale alpha
    Calibrate(Common),
    /// Terminal-error convergence rates over method.hs
    Convergence(Common),
    /// Parameter inference on synthetic data
    Infer(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML)
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let overrides = Overrides {
            method: self
                .method
                .as_deref()
                .map(str::parse::<MethodTag>)
                .transpose()?,
            mode: self
                .mode
                .as_deref()
                .map(str::parse::<SamplerMode>)
                .transpose()?,
            h: self.h,
            alpha: self.alpha,
            t_end: self.t_end,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            threads: self.threads,
            output: self.output.clone(),
        };
        cfg.apply(&overrides)?;
        Ok(cfg)
    }
}

type Driver = fn(&ExperimentConfig) -> Result<Vec<PathBuf>, Error>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let (common, driver): (&Common, Driver) = match &cli.command {
        Command::Solve(c) => (c, experiment::run_solve),
        Command::Ensemble(c) => (c, experiment::run_ensemble),
        Command::Calibrate(c) => (c, experiment::run_calibrate),
        Command::Convergence(c) => (c, experiment::run_convergence),
        Command::Infer(c) => (c, experiment::run_infer),
    };
    let cfg = common.load()?;
    experiment::with_threads(&cfg, || driver(&cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
