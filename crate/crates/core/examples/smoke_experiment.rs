//! End-to-end cross-validation on the bundled synthetic two-class dataset:
//! feature caching, transform training, all three classifier variants, and
//! the aggregated report. Artifacts land in the directory given as the first
//! argument (default: a temporary directory).

use std::path::PathBuf;

use melseed::experiment::{ensure_smoke_dataset, run_experiment, ExperimentConfig};

fn main() -> melseed::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let work = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let mut cfg = ExperimentConfig::default();
    cfg.data.work_dir = work.clone();
    let cfg = cfg.smoke();
    ensure_smoke_dataset(&cfg)?;
    let report = run_experiment(&cfg)?;
    for c in &report.cells {
        println!("{:<22} {:<5} {:<11} mean {:.3}  std {:.3}", c.variant.to_string(), c.checkpoint, c.voting.to_string(), c.mean, c.std);
    }
    println!("overrides recorded in the report:");
    for o in &report.overrides {
        println!("  {} = {} (default {})", o.key, o.value, o.default);
    }
    println!("artifacts in {}", work.display());
    Ok(())
}
