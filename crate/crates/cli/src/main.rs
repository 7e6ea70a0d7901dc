use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rvf_cli::commands::{self, DegradeArgs, Preset};
use rvf_cli::{run_experiment, CliError, ExperimentConfig, ExperimentKind, Result};
use rvf_core::diagnostics::Metric;

/// Toy recurrent video super-resolution experiments.
#[derive(Parser)]
#[command(name = "rvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade a directory of PNG frames.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "realworld")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        scale: usize,
        /// Blur or noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
        /// JPEG quality.
        #[arg(long)]
        quality: Option<u8>,
        /// Resize factor (default `1/scale`).
        #[arg(long)]
        factor: Option<f64>,
    },
    /// Train a model and write `model.rvfc`.
    Train(ExperimentArgs),
    /// Super-resolve a directory of LR frames with a checkpoint.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Per-frame PSNR, SSIM or Charbonnier of `--out` against `--ref`.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "psnr,ssim,charbonnier")]
        metrics: Vec<Metric>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Radial power spectrum of every frame.
    Rps {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Attention sensitivity to query degradation.
    ProbeSensitivity(ExperimentArgs),
    /// Channel covariance of attention inputs and outputs.
    ProbeCovariance(ExperimentArgs),
    /// Train and evaluate the variant lattice.
    Ablate(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long = "out")]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentArgs {
    fn load(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.output {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.with_kind(kind)
    }
}

fn experiment(cfg: ExperimentConfig) -> Result<()> {
    let report = run_experiment(&cfg)?;
    for (name, path) in &report.csv {
        println!("{name}: {}", path.display());
    }
    println!("report: {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rvf_cli::configure_threads()?;
    match cli.command {
        Command::Degrade {
            input,
            output,
            preset,
            seed,
            scale,
            sigma,
            quality,
            factor,
        } => {
            let args = DegradeArgs {
                preset,
                seed,
                scale,
                sigma,
                quality,
                factor,
            };
            let table = commands::degrade(&input, &output, &args)?;
            println!("{} frames written to {}", table.len(), output.display());
            Ok(())
        }
        Command::Train(a) => experiment(a.load(ExperimentKind::Train)?),
        Command::Infer {
            config,
            ckpt,
            input,
            output,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if ckpt.is_some() {
                cfg.infer.checkpoint = ckpt;
            }
            if input.is_some() {
                cfg.infer.input_dir = input;
            }
            if let Some(out) = output {
                cfg.output_dir = out;
            }
            experiment(cfg.with_kind(ExperimentKind::Infer)?)
        }
        Command::Metrics {
            reference,
            output,
            metrics,
            csv,
        } => commands::emit(
            &commands::metrics(&reference, &output, &metrics)?,
            csv.as_ref(),
        ),
        Command::Rps { input, bins, csv } => {
            commands::emit(&commands::rps(&input, bins)?, csv.as_ref())
        }
        Command::ProbeSensitivity(a) => experiment(a.load(ExperimentKind::Sensitivity)?),
        Command::ProbeCovariance(a) => experiment(a.load(ExperimentKind::Covariance)?),
        Command::Ablate(a) => experiment(a.load(ExperimentKind::Ablation)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
