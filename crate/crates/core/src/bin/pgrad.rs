use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pgrad::harness::{
    build_environment, final_j_summary, format_mdp, gradcheck, run_experiment, write_csv, EnvSpec,
    ExperimentConfig,
};
use pgrad::Error;

/// Directory for CSV output when neither `--out` nor an absolute `output` key is given.
const OUT_DIR_VAR: &str = "PGRAD_OUT_DIR";

#[derive(Parser)]
#[command(name = "pgrad", version, about = "Policy-gradient experiments on tabular MDPs")]
struct Cli {
    /// Suppress the summary printed to stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one CSV row per (seed, iteration).
    Run {
        config: PathBuf,
        /// CSV path; overrides the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Record wall-clock milliseconds per iteration (output is then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Compare exact, finite-difference and natural gradients at the config's initial parameters.
    Gradcheck {
        config: PathBuf,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Environment utilities.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Print an environment in MDP file format.
    Show { name: String },
}

#[derive(Args)]
struct SeedArgs {
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

enum Failure {
    Check(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("pgrad: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("pgrad: {e}");
            ExitCode::from(if e.is_invalid_input() { 2 } else { 1 })
        }
    }
}

fn load(path: &Path, seeds: &SeedArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(path)?;
    for seed in &mut config.seeds {
        *seed = seed
            .checked_add(seeds.seed_offset)
            .ok_or_else(|| Error::InvalidArgument("seed offset overflows".into()))?;
    }
    Ok(config)
}

fn output_path(config_path: &Path, config: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    if let Some(out) = out {
        return out.to_path_buf();
    }
    let dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_default();
    match &config.output {
        Some(p) => dir.join(p),
        None => {
            let stem = config_path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            dir.join(format!("{stem}.csv"))
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config: path, out, seeds, timing } => {
            let config = load(path, seeds)?;
            let records = run_experiment(&config, *timing)?;
            let target = output_path(path, &config, out.as_deref());
            if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(Error::from)?;
            }
            write_csv(&records, &target)?;
            if !cli.quiet {
                if let Some(s) = final_j_summary(&records) {
                    println!(
                        "{} on {}: final J = {:.6} ± {:.6} (mean ± s.e., {} seeds)",
                        config.method, config.environment, s.mean, s.standard_error, s.n
                    );
                }
                println!("wrote {} rows to {}", records.len(), target.display());
            }
            Ok(())
        }
        Command::Gradcheck { config: path, seeds } => {
            let config = load(path, seeds)?;
            let report = gradcheck(&config)?;
            if !cli.quiet {
                print!("{report}");
            }
            let failures = report.failures();
            if failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Check(format!("gradient check failed: {}", failures.join(", "))))
            }
        }
        Command::Env { command: EnvCommand::Show { name } } => {
            let env = build_environment(&EnvSpec::parse(name)?)?;
            print!("{}", format_mdp(&env.mdp));
            Ok(())
        }
    }
}
