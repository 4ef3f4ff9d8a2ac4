//! Synthetic stand-in dataset: each class is a harmonic tone family.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SmokeConfig;
use crate::audio::{write_wav_pcm16, CLIP_SECONDS, NUM_CLASSES, NUM_FOLDS};
use crate::error::{Error, Result};

/// Fundamental frequency of class `k`.
pub fn class_frequency(k: usize) -> f64 {
    220.0 * 2f64.powf(k as f64 * 0.75)
}

/// One clip of class `k`: a pitch-jittered harmonic tone with a slow
/// amplitude envelope, light noise and a short silent gap.
pub fn synth_clip(k: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let n = (CLIP_SECONDS * sample_rate as f64).round() as usize;
    let f0 = class_frequency(k) * rng.gen_range(0.97..1.03);
    let amp = rng.gen_range(0.3..0.8);
    let wobble = rng.gen_range(0.5..2.0);
    let gap_start = rng.gen_range(0..n - n / 10);
    let sr = sample_rate as f64;
    (0..n)
        .map(|i| {
            if (gap_start..gap_start + n / 20).contains(&i) {
                return 0.0;
            }
            let t = i as f64 / sr;
            let env = 0.6 + 0.4 * (2.0 * PI * wobble * t).sin();
            let tone = (1..=3)
                .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                .sum::<f64>()
                / 1.84;
            amp * env * tone + 0.01 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Writes `{dir}/audio/{fold}-{source}-A-{class}.wav` files, folds assigned
/// round-robin within each class. Existing files are overwritten.
pub fn generate_smoke_dataset(dir: &Path, cfg: &SmokeConfig, seed: u64) -> Result<Vec<PathBuf>> {
    if cfg.classes == 0 || cfg.classes > NUM_CLASSES {
        return Err(Error::Config(format!("smoke classes must be in 1..={NUM_CLASSES}")));
    }
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..cfg.classes {
        for j in 0..cfg.clips_per_class {
            let fold = (j % NUM_FOLDS as usize) + 1;
            let path = audio.join(format!("{fold}-{}-A-{k}.wav", 1000 + 100 * k + j));
            write_wav_pcm16(&path, &synth_clip(k, cfg.source_rate, &mut rng), cfg.source_rate)?;
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
