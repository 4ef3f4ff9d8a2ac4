//! Trains the transform model on segments of synthetic clips and reports
//! how closely it reproduces held-out log-mel spectrograms.
//!
//! `cargo run --release --example train_mst -- full` uses the full-width
//! model; the default is a narrow one that trains in seconds.

use std::f64::consts::PI;

use melseed::audio::AudioClip;
use melseed::features::{fit_norm_stats, segment_clip, FeatureParams, MelExtractor, SegmentKind};
use melseed::mst::{export_filters, load_mst, predict_mel, train_mst, MstArchitecture, MstConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn clip(id: usize, rng: &mut ChaCha8Rng) -> melseed::Result<AudioClip> {
    let f = rng.gen_range(150.0..3000.0);
    let rate = rng.gen_range(0.5..4.0);
    let x = (0..110_250)
        .map(|i| {
            let t = i as f64 / 22_050.0;
            0.5 * (2.0 * PI * f * t).sin() * (2.0 * PI * rate * t).sin().abs() + 0.02 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    AudioClip::new(x, 22_050, format!("clip{id}"), 0, 1)
}

fn main() -> melseed::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let params = FeatureParams::default();
    let extractor = MelExtractor::new(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for id in 0..8 {
        let segs = segment_clip(&clip(id, &mut rng)?, "orig", &extractor, SegmentKind::Mst)?;
        if id < 6 { train.extend(segs) } else { val.extend(segs) }
    }
    let stats = fit_norm_stats(train.iter().map(|s| s.log_mel.as_slice()))?;
    let arch = if full {
        MstArchitecture::default()
    } else {
        MstArchitecture { filters1: 64, filters2: 32, ..Default::default() }
    };
    let cfg = MstConfig { arch: arch.clone(), batch_size: 6, max_epochs: 60, patience: 10, ..Default::default() };
    let outcome = train_mst(&train, &val, &stats, &cfg, None)?;
    for e in outcome.curve.iter().step_by(10) {
        println!("epoch {:>3}: train {:.4}  val {:.4}", e.epoch, e.train_mse, e.val_mse);
    }
    println!("best validation MSE {:.4} at epoch {}", outcome.best_val_mse, outcome.best_epoch);

    let model = load_mst(&outcome.best, &arch)?;
    let pred = predict_mel(&model, &val[0].raw, &params)?;
    println!("prediction grid {}x{}", pred.rows(), pred.cols());
    let filters = export_filters(&outcome.best)?;
    println!("first-layer filters {}x{}", filters.rows(), filters.cols());
    Ok(())
}
