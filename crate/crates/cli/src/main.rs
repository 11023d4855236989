//! `vlsf`: batch front end for the bound, decoding, tuning and spectral
//! experiments. Data goes to CSV files, logs to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vlsf_core::harness::{self, Command, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "vlsf",
    version,
    about = "Information-density bounds and VLSF decoding on Gauss-Markov fading channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment configuration (built-in defaults if omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory; each command writes into a subdirectory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Number of decoding trials.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,

    /// Only log errors, and do not print the run summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Per-trace ψ/φ trajectories and their average.
    Bounds,
    /// Decoding campaign: stopping-time histogram and error rate.
    Simulate,
    /// Grid search over (r, sigma_h2).
    Tune,
    /// Convergence of the per-symbol Rényi moment to its spectral limit.
    Szego,
    /// A single channel realization.
    Trace,
    /// Print the resolved configuration as TOML.
    Config,
}

fn resolve(cli: &Cli) -> vlsf_core::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .init();

    let result = resolve(&cli).and_then(|config| {
        let command = match cli.command {
            Cmd::Bounds => Command::Bounds,
            Cmd::Simulate => Command::Simulate,
            Cmd::Tune => Command::Tune,
            Cmd::Szego => Command::Szego,
            Cmd::Trace => Command::Trace,
            Cmd::Config => {
                print!("{}", config.to_toml_string()?);
                return Ok(());
            }
        };
        let report = harness::run(command, &config)?;
        if !cli.quiet {
            for line in &report.summary {
                println!("{line}");
            }
            println!(
                "wrote {} files to {}",
                report.files.len(),
                report.dir.display()
            );
        }
        Ok(())
    });

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
