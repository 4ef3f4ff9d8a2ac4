use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use melseed::classifier::InitVariant;
use melseed::experiment::{self, ExperimentConfig};
use melseed::nn::gradcheck::standard_suite;
use melseed::Error;

#[derive(Parser)]
#[command(name = "melseed", version, about = "Learned mel-spectrogram front ends for sound classification")]
struct Cli {
    /// TOML experiment configuration (an empty file selects the defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for model initialization, shuffling and dropout.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated test folds, e.g. `1,3`.
    #[arg(long, global = true, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=5))]
    folds: Vec<u8>,
    /// Tiny synthetic two-class preset under the work directory.
    #[arg(long, global = true)]
    smoke: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode, resample, augment and cache features for every clip.
    Prepare,
    /// Train the transform model for one test fold (default: all configured folds).
    TrainMst {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        fold: Option<u8>,
    },
    /// Train a classifier variant.
    TrainClf {
        #[arg(long)]
        variant: InitVariant,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        fold: Option<u8>,
    },
    /// Score trained classifiers on their test folds.
    Evaluate {
        #[arg(long)]
        variant: InitVariant,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        fold: Option<u8>,
    },
    /// Aggregate evaluations into report.json and report.csv.
    Report,
    /// Export first-layer transform kernels as CSV and PNG.
    DumpFilters {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        fold: Option<u8>,
    },
    /// Render target and predicted log-mel for one clip.
    DumpSpectrogram {
        #[arg(long)]
        clip: String,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        fold: Option<u8>,
    },
    /// Finite-difference gradient checks of every layer and loss.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// All stages for every configured fold and variant.
    Run,
}

fn folds(cfg: &ExperimentConfig, one: Option<u8>) -> Vec<u8> {
    one.map(|f| vec![f]).unwrap_or_else(|| cfg.experiment.folds.clone())
}

fn load(cli: &Cli) -> melseed::Result<ExperimentConfig> {
    let path = cli.config.as_ref().expect("clap enforces --config");
    let mut cfg = ExperimentConfig::load(path)?;
    if cli.smoke {
        cfg = cfg.smoke();
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if !cli.folds.is_empty() {
        cfg.experiment.folds = cli.folds.clone();
    }
    cfg.validate()?;
    if cli.smoke {
        experiment::ensure_smoke_dataset(&cfg)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> melseed::Result<bool> {
    if let Command::Gradcheck { seeds } = cli.command {
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            for case in standard_suite(seed)? {
                let e = case.report.max_rel_error();
                worst = worst.max(e);
                println!("seed {seed:>2}  {:<60} {e:.3e}", case.name);
            }
        }
        let ok = worst < 1e-4;
        println!("max relative error {worst:.3e}: {}", if ok { "ok" } else { "FAILED" });
        return Ok(ok);
    }
    let cfg = load(cli)?;
    match &cli.command {
        Command::Prepare => {
            let s = experiment::prepare(&cfg)?;
            println!(
                "{} clips, {} cached variants, {} transform segments, {} classifier segments",
                s.clips, s.cached, s.mst_segments, s.clf_segments
            );
        }
        Command::TrainMst { fold } => {
            for f in folds(&cfg, *fold) {
                let o = experiment::train_mst_fold(&cfg, f)?;
                println!("fold {f}: best validation MSE {:.5} at epoch {}", o.best_val_mse, o.best_epoch);
            }
        }
        Command::TrainClf { variant, fold } => {
            for f in folds(&cfg, *fold) {
                let o = experiment::train_clf_fold(&cfg, *variant, f)?;
                let last = o.curve.last().expect("curve has epoch 0");
                println!(
                    "{variant} fold {f}: final train loss {:.4}, train accuracy {:.3}",
                    last.train_loss, last.train_acc
                );
            }
        }
        Command::Evaluate { variant, fold } => {
            for f in folds(&cfg, *fold) {
                let e = experiment::evaluate_fold(&cfg, *variant, f)?;
                for ce in &e.evaluations {
                    for r in &ce.results {
                        println!("{variant} fold {f} {} {}: {:.3}", ce.checkpoint, r.voting, r.accuracy);
                    }
                }
            }
        }
        Command::Report => print_report(&experiment::report(&cfg)?),
        Command::DumpFilters { fold } => {
            for f in folds(&cfg, *fold) {
                println!("{}", experiment::dump_filters(&cfg, f)?.display());
            }
        }
        Command::DumpSpectrogram { clip, fold } => {
            let c = experiment::emit_comparison_figure(&cfg, clip, *fold)?;
            println!("{clip}: {}x{} grids, MSE {:.5}", c.bands, c.frames, c.mse);
        }
        Command::Run => print_report(&experiment::run_experiment(&cfg)?),
        Command::Gradcheck { .. } => unreachable!(),
    }
    Ok(true)
}

fn print_report(r: &experiment::EvaluationReport) {
    println!("{:<24}{:<8}{:<13}{:>8}{:>8}", "variant", "ckpt", "voting", "mean", "std");
    for c in &r.cells {
        println!(
            "{:<24}{:<8}{:<13}{:>8.3}{:>8.3}",
            c.variant.to_string(),
            c.checkpoint,
            c.voting.to_string(),
            c.mean,
            c.std
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.config.is_none() && !matches!(cli.command, Command::Gradcheck { .. }) {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "the argument '--config <CONFIG>' is required")
            .exit();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::MissingArtifact { .. } => 3,
                _ => 1,
            })
        }
    }
}
