use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use auxopt::harness::{
    check, load_config_file, params_report, run_experiment, run_sweep, ExperimentConfig,
};
use auxopt::problems::synthetic::mushrooms_like;
use auxopt::Error;

#[derive(Parser)]
#[command(name = "auxopt", version, about = "Optimization with auxiliary helper gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-repeat CSVs, an aggregate and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value of a numeric config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted field path such as `algorithm.K` or `problem.toy.zeta`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate similarity and bias constants and probe weak convexity.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the problem constants and the step sizes the analysis prescribes.
    Params {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the synthetic categorical dataset in LIBSVM format.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::FileNotFound(_)
        | Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::Diverged(_) => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config_file(path)?;
    if let Ok(seed) = std::env::var("AUXOPT_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| Error::config("AUXOPT_SEED", format!("not an unsigned integer: `{seed}`")))?;
    }
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let outcome = run_experiment(&cfg, out.as_deref())?;
            log::info!("wrote {}", outcome.out_dir.display());
            print_json(&outcome.metadata["runs"]);
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load(&config)?;
            let rows = run_sweep(&cfg, &axis, &values, out.as_deref())?;
            let diverged = rows.iter().filter(|r| r.status != "ok").count();
            print_json(&serde_json::to_value(&rows).expect("rows serialize"));
            if diverged > 0 {
                return Err(Error::Diverged(Box::new(auxopt::error::Divergence {
                    t: 0,
                    k: 0,
                    reason: format!("{diverged} of {} sweep points diverged", rows.len()),
                    partial: Default::default(),
                })));
            }
        }
        Command::Check { config } => {
            let report = check(&load(&config)?)?;
            print_json(&serde_json::to_value(&report).expect("report serializes"));
        }
        Command::Params { config } => print_json(&params_report(&load(&config)?)?),
        Command::GenData { out, seed } => std::fs::write(&out, mushrooms_like(seed))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
