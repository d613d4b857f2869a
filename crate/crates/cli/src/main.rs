mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for a failure of the given kind.
pub const EXIT_FAILED_RUNS: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Invalid or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Some runs of a grid failed; the others completed.
#[derive(Debug)]
pub struct RunFailures(pub usize);

impl std::fmt::Display for RunFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} run(s) failed", self.0)
    }
}

impl std::error::Error for RunFailures {}

#[derive(Parser)]
#[command(name = "vmfkd", version, about = "vMF activation models and class-wise distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set teacher.train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher classifier and save its checkpoint.
    TrainTeacher {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        epochs: Option<usize>,
        /// Seed for initialisation and batch order.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Derive the vMF prior and class-relation matrix from a checkpoint.
    Derive {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Shared concentration κ, or `inspect`.
        #[arg(long)]
        kappa: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        /// Relation-matrix softmax temperature (default folds the activation norm into τ).
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_class_scaling: bool,
    },
    /// Train students over the configured modes, shifts and seeds.
    Distill {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated modes: label, kd, ckd, ckd_plus_kd.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Report plain vs normalized accuracy, norm spreads and the gen/disc gap.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// κ for the gap report (default 80).
        #[arg(long, default_value_t = 80.0)]
        kappa: f64,
    },
    /// Export activations and class densities of a 2-D penultimate space.
    Viz {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Shared κ; inspected from the data when omitted.
        #[arg(long)]
        kappa: Option<f64>,
        /// Also write polar.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Draw unit vectors from one class of a prior file.
    Sample {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long, short)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiply every vector by this constant.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Output CSV; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Evaluation images and labels (IDX); the config's test split when omitted.
#[derive(Args, Clone, Default)]
pub struct DataArgs {
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainTeacher { cfg, epochs, seed } => commands::train_teacher(&cfg, epochs, seed),
        Command::Derive { cfg, checkpoint, kappa, samples, temperature, seed, per_class_scaling } => {
            commands::derive(&cfg, checkpoint, kappa, samples, temperature, seed, per_class_scaling)
        }
        Command::Distill { cfg, seeds, modes, epochs } => commands::distill(&cfg, seeds, modes, epochs),
        Command::Inspect { cfg, checkpoint, data, kappa } => commands::inspect(&cfg, checkpoint, &data, kappa),
        Command::Viz { cfg, checkpoint, data, kappa, svg } => commands::viz(&cfg, checkpoint, &data, kappa, svg),
        Command::Sample { prior, class, n, seed, scale, out } => commands::sample(&prior, class, n, seed, scale, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return EXIT_CONFIG;
        }
        if cause.is::<RunFailures>() {
            return EXIT_FAILED_RUNS;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(err) = cause.downcast_ref::<vmfkd::Error>() {
            use vmfkd::Error::*;
            return match err {
                Io { .. } | BadMagic { .. } | Truncated { .. } | CountMismatch { .. } | Format { .. } => EXIT_IO,
                NonFinite(_) | Diverged { .. } | ZeroVector | ZeroPrototype(_) | ZeroActivation => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_FAILED_RUNS
}
