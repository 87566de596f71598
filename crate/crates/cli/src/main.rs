use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixsr_cli::commands::{self, BEST_WEIGHTS, LOG_FILE};
use mixsr_cli::config::OUTPUT_ENV;
use mixsr_cli::plot::{label_for, plot_logs};
use mixsr_cli::sweep::SweepSpec;
use mixsr_cli::{CliError, CliResult, ExperimentConfig, Overrides, Preset, Scale};

/// MixUp and learned-degradation synthesis for same-resolution
/// super-resolution.
#[derive(Debug, Parser)]
#[command(name = "mixsr", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed, overriding `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Method preset: baseline, mixup, synthesis or full.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<Preset>,
    /// Compute scale: reference or desk.
    #[arg(long, global = true, value_name = "NAME")]
    scale: Option<Scale>,
    /// Output root (default: `paths.output`, then $MIXSR_OUT, then ./runs).
    #[arg(long, global = true, value_name = "DIR", env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads for gradient computation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the procedural toy dataset (train/val pairs, extra HR images).
    MakeToy {
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Crop raw images into sub-images and write manifests.
    Prepare,
    /// Train the HR -> LR degradation network.
    TrainDegradation,
    /// Degrade the extra HR images into a synthetic training set.
    Synthesize,
    /// Train the super-resolution network.
    TrainSr,
    /// Score a checkpoint and write per-image metrics.
    Evaluate {
        /// Weights to score (default: the SR run's best checkpoint).
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
        /// Manifest to score (default: the validation manifest).
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Average over the 8 flips/rotations of each input.
        #[arg(long)]
        self_ensemble: bool,
    },
    /// Train once per value along one axis and overlay the curves.
    Sweep {
        /// data_volume, model_size, synthetic_volume or degradation_type.
        #[arg(long, requires = "values")]
        axis: Option<String>,
        /// Comma-separated values, e.g. `2000,all`.
        #[arg(long, requires = "axis")]
        values: Option<String>,
    },
    /// Plot validation PSNR against iteration for one or more logs.
    Plot {
        logs: Vec<PathBuf>,
        /// SVG file to write.
        #[arg(long, short, default_value = "curves.svg")]
        output: PathBuf,
    },
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let overrides = Overrides {
        seed: cli.seed,
        preset: cli.preset,
        scale: cli.scale,
        output: cli.out.clone(),
        threads: cli.threads,
    };
    match &cli.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::from_overrides(&overrides),
    }
}

fn report_training(what: &str, dir: &std::path::Path, outcome: &mixsr::training::TrainOutcome<f32>) {
    println!(
        "{what}: best val PSNR {:.4} dB at iteration {} ({} log rows)",
        outcome.best_val_psnr,
        outcome.best_iter,
        outcome.log.rows.len()
    );
    println!("  weights: {}", dir.join(BEST_WEIGHTS).display());
    println!("  log: {}", dir.join(LOG_FILE).display());
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::MakeToy { dir, size } => {
            let seed = cli.seed.unwrap_or(0);
            commands::make_toy(dir, *size, seed)?;
            println!("toy dataset written to {} (6 train pairs, 2 val pairs, 8 extra HR)", dir.display());
        }
        Command::Prepare => {
            let cfg = load_config(&cli)?;
            let r = commands::prepare(&cfg)?;
            println!("train: {} paired sub-images from {} pairs", r.train_subimages, r.train_images);
            println!("val: {} pairs", r.val_images);
            println!("extra: {} HR sub-images from {} images", r.extra_subimages, r.extra_images);
        }
        Command::TrainDegradation => {
            let cfg = load_config(&cli)?;
            let outcome = commands::train_degradation(&cfg)?;
            report_training("degradation", &cfg.layout().degradation(), &outcome);
        }
        Command::Synthesize => {
            let cfg = load_config(&cli)?;
            let set = commands::synthesize(&cfg)?;
            if set.is_empty() {
                eprintln!("warning: no extra HR images; the synthetic set is empty");
            }
            println!("synthesized {} pairs ({}) in {}", set.len(), set.spec.kind(), cfg.layout().synthetic().display());
        }
        Command::TrainSr => {
            let cfg = load_config(&cli)?;
            let outcome = commands::train_sr(&cfg)?;
            report_training("sr", &cfg.layout().sr(), &outcome);
        }
        Command::Evaluate {
            weights,
            manifest,
            self_ensemble,
        } => {
            let cfg = load_config(&cli)?;
            let eval = commands::evaluate(&cfg, weights.as_deref(), manifest.as_deref(), *self_ensemble)?;
            let s = &eval.summary;
            println!("images: {}", s.records.len());
            println!("mean PSNR: {} dB", s.mean_psnr);
            println!("mean SSIM: {:.6}", s.mean_ssim);
            if s.flagged() {
                println!("IdenticalImages: {} of {} restored images equal their reference", s.identical, s.records.len());
            }
            println!("csv: {}", eval.csv.display());
        }
        Command::Sweep { axis, values } => {
            let cfg = load_config(&cli)?;
            let spec = match (axis, values) {
                (Some(a), Some(v)) => SweepSpec::parse(a, v).map_err(CliError::Usage)?,
                _ => cfg
                    .sweep
                    .clone()
                    .ok_or_else(|| CliError::Usage("no sweep: pass --axis and --values or add a [sweep] section".into()))?,
            };
            let report = commands::sweep(&cfg, &spec)?;
            for (label, log) in &report.logs {
                println!("{label}: {}", log.display());
            }
            println!("plot: {}", report.plot.display());
        }
        Command::Plot { logs, output } => {
            let labelled: Vec<_> = logs.iter().map(|p| (label_for(p), p.clone())).collect();
            let curves = plot_logs(&labelled, output, "validation PSNR")?;
            println!("{} curves written to {}", curves.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
