use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oscnet::config::{parse_assignment, ExperimentConfig};
use oscnet::{runner, Error};

/// Reservoir computing experiments on a chain of coupled Duffing oscillators.
#[derive(Parser)]
#[command(name = "oscnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads for sweeps, robustness studies and replicas.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config file and print the resolved configuration.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the version.
    Version,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    config: PathBuf,
    /// Override a config value by dotted path, e.g. `network.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

const EXIT_INVALID: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_assignment(s).map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        ExperimentConfig::load(&self.config, &overrides)
    }
}

fn report_violations(errors: &[Error]) -> ExitCode {
    eprintln!("{} configuration problem(s):", errors.len());
    for e in errors {
        eprintln!("  - {e}");
    }
    ExitCode::from(EXIT_INVALID)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("oscnet {}", runner::VERSION);
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let cfg = match config.load() {
                Ok(c) => c,
                Err(e) => return report_violations(&[e]),
            };
            match cfg.to_toml() {
                Ok(text) => print!("{text}"),
                Err(e) => return report_violations(&[e]),
            }
            let problems = cfg.violations();
            if problems.is_empty() {
                eprintln!("configuration is valid");
                ExitCode::SUCCESS
            } else {
                report_violations(&problems)
            }
        }
        Command::Run { config, workers, output } => {
            let mut cfg = match config.load() {
                Ok(c) => c,
                Err(e) => return report_violations(&[e]),
            };
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let problems = cfg.violations();
            if !problems.is_empty() {
                return report_violations(&problems);
            }
            let out = cfg.output_dir.clone();
            match runner::run(&cfg, &out) {
                Ok(report) => {
                    println!("{:#}", report.summary);
                    eprintln!("results written to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) if e.is_numerical() => {
                    eprintln!("numerical failure: {e}");
                    ExitCode::from(EXIT_NUMERICAL)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_INVALID)
                }
            }
        }
    }
}
