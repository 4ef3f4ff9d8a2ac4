//! The four augmented copies of a clip, with the dominant pitch of each.

use std::f64::consts::PI;

use melseed::audio::AudioClip;
use melseed::features::{augment, stft_magnitude, AugmentParams};

fn dominant_hz(x: &[f64], sr: f64) -> f64 {
    let m = stft_magnitude(x, 4096, 1024).expect("non-empty");
    let mid = m.cols() / 2;
    let bin = (0..m.rows()).max_by(|&a, &b| m.get(a, mid).total_cmp(&m.get(b, mid))).unwrap();
    bin as f64 * sr / 4096.0
}

fn main() -> melseed::Result<()> {
    let sr = 22_050.0;
    let samples: Vec<f64> = (0..110_250)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / sr).sin() * (1.0 + (i as f64 / 4000.0).sin()) / 2.0)
        .collect();
    let clip = AudioClip::new(samples, 22_050, "1-7-A-2", 2, 1)?;
    println!("original: {:.1} Hz", dominant_hz(&clip.samples, sr));
    for (variant, c) in augment(&clip, &AugmentParams::default()) {
        println!("{variant:>5}: {} samples, dominant {:.1} Hz", c.samples.len(), dominant_hz(&c.samples, sr));
    }
    Ok(())
}
