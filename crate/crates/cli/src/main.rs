//! `acgan`: train, ablate, evaluate, sample, embed and report.

mod commands;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acgan::Error;

#[derive(Debug, Parser)]
#[command(
    name = "acgan",
    version,
    about = "Auxiliary-classifier GANs as image classifiers"
)]
struct Cli {
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path override, e.g. `--set trainer.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Standard,
    /// Every coordinate within `--tau`.
    Truncated,
    /// Whole vector within norm `--tau`.
    NormTruncated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the single cell the (overridden) grid resolves to.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the whole grid (resumable), then write the report.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Grid cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Accuracy of a checkpoint's classifier on the validation or test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Sample a generator checkpoint into a PNG montage plus raw arrays.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, value_enum, default_value_t = RegimeArg::Standard)]
        regime: RegimeArg,
        /// Truncation threshold (truncated regimes only).
        #[arg(long, default_value_t = acgan::latent::DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output PNG; raw arrays go next to it.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// t-SNE dispersion analysis of the analysis cell's CNN, ACGAN and WACGAN_GPT runs.
    Embed {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize the records of a run directory into report files.
    Report {
        /// Run directory (the config's output_dir).
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// 0 ok, 1 invalid config or usage, 2 data error, 3 training abort.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Format { .. }
        | Error::EmptyClass(_)
        | Error::LabelOutOfRange { .. } => 2,
        Error::TrainingAborted(_) | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    logging::init(cli.verbose);
    let result = match cli.command {
        Command::Train { cfg } => commands::train(&cfg.config, &cfg.overrides),
        Command::Ablate { cfg, jobs } => commands::ablate(&cfg.config, &cfg.overrides, jobs),
        Command::Evaluate {
            cfg,
            checkpoint,
            split,
        } => commands::evaluate(
            &cfg.config,
            &cfg.overrides,
            &checkpoint,
            matches!(split, SplitArg::Test),
        ),
        Command::Sample {
            checkpoint,
            count,
            regime,
            tau,
            seed,
            out,
        } => {
            let regime = match regime {
                RegimeArg::Standard => acgan::latent::Regime::Standard,
                RegimeArg::Truncated => acgan::latent::Regime::Truncated { threshold: tau },
                RegimeArg::NormTruncated => acgan::latent::Regime::NormTruncated { threshold: tau },
            };
            commands::sample(&checkpoint, count, regime, seed, &out)
        }
        Command::Embed { cfg } => commands::embed(&cfg.config, &cfg.overrides),
        Command::Report { run_dir } => commands::report(&run_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
