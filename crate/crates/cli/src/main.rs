use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use impatient::bandit::PolicyKind;
use impatient_cli::commands::{self, DEFAULT_MAE_SIZES};
use impatient_cli::config::{config_error, parse_seeds, RunConfig};
use impatient_cli::ConfigError;

#[derive(Parser)]
#[command(name = "impatient", version, about = "Progressive-feedback bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its ground truth.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a prior from a corpus.
    TrainPrior {
        #[arg(long)]
        corpus: PathBuf,
        /// Prior JSON file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run bandit episodes and write per-seed and aggregate metrics.
    RunBandit {
        #[arg(long)]
        config: PathBuf,
        /// One of progressive, delayed, day_two_proxy, oracle; all when omitted.
        #[arg(long)]
        policy: Option<String>,
        /// Comma-separated seeds; overrides `seeds` from the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export variance-explained curves, the MAE grid and covariances.
    Analyze {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated trace counts for the MAE grid.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MAE_SIZES)]
        mae_sizes: Vec<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            for path in commands::gen_data(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::TrainPrior { corpus, out } => {
            commands::train_prior(&corpus, &out)?;
            println!("{}", out.display());
        }
        Command::RunBandit {
            config,
            policy,
            seeds,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let policies = match policy {
                Some(name) => vec![name
                    .parse::<PolicyKind>()
                    .map_err(|e| config_error(format!("`--policy`: {e}")))?],
                None => PolicyKind::ALL.to_vec(),
            };
            let seeds = match seeds {
                Some(list) => parse_seeds(&list)?,
                None => cfg.seeds.clone(),
            };
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            for path in commands::run_bandit(&cfg, &policies, &seeds, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Analyze {
            prior,
            corpus,
            out,
            mae_sizes,
        } => {
            for path in commands::analyze(&prior, &corpus, &out, &mae_sizes)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
