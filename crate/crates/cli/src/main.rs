use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdse_cli::config::{Config, EXPERIMENTS};
use tdse_cli::experiments::{run, RunContext};
use tdse_cli::verify::{run_suite, SUITES};
use tdse_cli::{exit_code, CliError};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error
  3  config file could not be parsed
  4  unknown experiment or suite
  5  invalid parameter value
  6  numerical failure
  7  i/o failure
  8  one or more verification checks failed";

#[derive(Parser)]
#[command(name = "tdse", version, about = "Space-time least-squares solvers for Schrödinger-type evolution problems", after_help = EXIT_CODES)]
struct Cli {
    /// Random seed; overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for `run` (default: results/<experiment>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all available cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file or a built-in experiment name
    /// (als-random, als-pathological, greedy-1d, greedy-3d).
    Run { config: String },
    /// Run an oracle/property suite
    /// (time-grid, block-linalg, matrix, gaussian, greedy, spectral, monotonicity, all).
    Verify { suite: String },
    /// Print the default config of a built-in experiment.
    Defaults { experiment: String },
}

fn load_config(arg: &str) -> Result<Config, CliError> {
    let path = Path::new(arg);
    if !path.exists() && EXPERIMENTS.contains(&arg) {
        return Config::default_for(arg);
    }
    Config::parse(&std::fs::read_to_string(path)?)
}

fn threads(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        requested
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config } => {
            let mut config = load_config(config)?;
            if let Some(seed) = cli.seed {
                config.set_seed(seed);
            }
            config.validate()?;
            let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("results").join(config.name()));
            let ctx = RunContext { threads: threads(cli.threads), progress: !cli.quiet };
            let artifacts = run(&config, &ctx)?;
            let written = artifacts.write(&out_dir)?;
            for line in &artifacts.summary {
                println!("{line}");
            }
            println!("wrote {} files to {}", written.len(), out_dir.display());
            Ok(())
        }
        Command::Verify { suite } => {
            if !SUITES.contains(&suite.as_str()) {
                return Err(CliError::UnknownExperiment(suite.clone()));
            }
            let checks = run_suite(suite, cli.seed.unwrap_or(0))?;
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                Err(CliError::Verification(failed))
            } else {
                Ok(())
            }
        }
        Command::Defaults { experiment } => {
            let mut config = Config::default_for(experiment)?;
            if let Some(seed) = cli.seed {
                config.set_seed(seed);
            }
            print!("{}", tdse_cli::config::to_toml(&config));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::from(exit_code::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
