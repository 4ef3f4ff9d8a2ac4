#![allow(dead_code)]

use std::f64::consts::PI;

use melseed::audio::AudioClip;
use melseed::features::{segment_clip, FeatureParams, MelExtractor, Segment, SegmentKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Slaney mel scale written out from its definition.
fn mel(f: f64) -> f64 {
    if f < 1000.0 {
        3.0 * f / 200.0
    } else {
        15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln()
    }
}

fn hz(m: f64) -> f64 {
    if m < 15.0 {
        200.0 * m / 3.0
    } else {
        1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp()
    }
}

/// Brute-force log-mel of the frame centered at `t * hop`, which must lie
/// fully inside the signal: direct DFT of the periodic-Hann-windowed frame,
/// then area-normalized triangles spaced evenly in mel between 0 Hz and Nyquist.
pub struct Oracle {
    n_fft: usize,
    hop: usize,
    sr: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    window: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl Oracle {
    pub fn new(n_fft: usize, hop: usize, n_mels: usize, sr: f64) -> Self {
        let cos = (0..n_fft).map(|j| (2.0 * PI * j as f64 / n_fft as f64).cos()).collect();
        let sin = (0..n_fft).map(|j| (2.0 * PI * j as f64 / n_fft as f64).sin()).collect();
        let window = (0..n_fft)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos())
            .collect();
        let top = mel(sr / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2).map(|i| hz(top * i as f64 / (n_mels + 1) as f64)).collect();
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..=n_fft / 2)
                    .map(|k| {
                        let f = k as f64 * sr / n_fft as f64;
                        let tri = ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0);
                        tri * 2.0 / (hi - lo)
                    })
                    .collect()
            })
            .collect();
        Self { n_fft, hop, sr, cos, sin, window, weights }
    }

    pub fn frame(&self, signal: &[f64], t: usize) -> Vec<f64> {
        let start = t * self.hop - self.n_fft / 2;
        let x: Vec<f64> = (0..self.n_fft).map(|n| signal[start + n] * self.window[n]).collect();
        let mag: Vec<f64> = (0..=self.n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in x.iter().enumerate() {
                    let j = (k * n) % self.n_fft;
                    re += v * self.cos[j];
                    im -= v * self.sin[j];
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        self.weights
            .iter()
            .map(|w| (w.iter().zip(&mag).map(|(a, b)| a * b).sum::<f64>() + 1e-10).ln())
            .collect()
    }

    /// Frames whose window lies entirely inside a signal of `len` samples.
    pub fn interior_frames(&self, len: usize) -> std::ops::RangeInclusive<usize> {
        let first = self.n_fft.div_ceil(2 * self.hop);
        let last = (len - self.n_fft / 2) / self.hop;
        first..=last
    }
}

/// Noise plus a few random partials, peak below 1.
pub fn random_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partials: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(50.0..10_000.0), rng.gen_range(0.05..0.3), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / 22_050.0;
            let tone: f64 = partials.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            0.7 * tone / 1.2 + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Five-second harmonic tone at the working rate.
pub fn tone_clip(id: &str, class: u16, fold: u8, freq: f64) -> AudioClip {
    let x = (0..110_250)
        .map(|i| {
            let t = i as f64 / 22_050.0;
            let env = 0.7 + 0.3 * (2.0 * PI * 1.3 * t).sin();
            0.5 * env * ((2.0 * PI * freq * t).sin() + 0.3 * (4.0 * PI * freq * t).sin())
        })
        .collect();
    AudioClip::new(x, 22_050, id, class, fold).unwrap()
}

/// Segments of tone clips `clips` of each class; clip `j` detunes by `j` percent.
pub fn tone_segments(classes: &[(u16, f64)], clips: std::ops::Range<usize>, kind: SegmentKind) -> Vec<Segment> {
    let ex = MelExtractor::new(&FeatureParams::default()).unwrap();
    let mut out = Vec::new();
    for &(class, f) in classes {
        for j in clips.clone() {
            let clip = tone_clip(&format!("1-{class}{j}-A-{class}"), class, 1, f * (1.0 + 0.01 * j as f64));
            out.extend(segment_clip(&clip, "orig", &ex, kind).unwrap());
        }
    }
    out
}
