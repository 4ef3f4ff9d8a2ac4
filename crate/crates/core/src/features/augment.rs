//! Time-stretch and pitch-shift augmentation.
//!
//! Time stretching is a phase vocoder over a 2048-point STFT with hop 512.
//! Pitch shifting resamples by the pitch ratio and stretches the result back
//! to the original duration.

use std::f64::consts::PI;
use std::fmt;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Stft;
use crate::audio::{fit_length, resample_signal, AudioClip};

const VOCODER_FFT: usize = 2048;
const VOCODER_HOP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    Original,
    TimeStretch(f64),
    PitchShift(f64),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Original => f.write_str("orig"),
            Variant::TimeStretch(r) => write!(f, "ts{r}"),
            Variant::PitchShift(s) => write!(f, "ps{s:+}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub time_stretch_rates: Vec<f64>,
    pub pitch_shift_semitones: Vec<f64>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            time_stretch_rates: vec![0.8, 1.2],
            pitch_shift_semitones: vec![-2.0, 2.0],
        }
    }
}

impl AugmentParams {
    pub fn variants(&self) -> Vec<Variant> {
        self.time_stretch_rates
            .iter()
            .map(|&r| Variant::TimeStretch(r))
            .chain(self.pitch_shift_semitones.iter().map(|&s| Variant::PitchShift(s)))
            .collect()
    }
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * (p / (2.0 * PI)).round()
}

/// Phase-vocoder time stretch. `rate > 1` shortens the signal; the output
/// has `floor(len / rate)` samples.
pub fn time_stretch(signal: &[f64], rate: f64) -> Vec<f64> {
    assert!(rate > 0.0, "stretch rate must be positive");
    let out_len = (signal.len() as f64 / rate).floor() as usize;
    if signal.is_empty() {
        return Vec::new();
    }
    let stft = Stft::new(VOCODER_FFT, VOCODER_HOP);
    let spec = stft.complex(signal).expect("non-empty signal");
    let bins = stft.bins();
    let n_frames = spec.len();
    let zero = vec![Complex64::new(0.0, 0.0); bins];
    let col = |t: usize| -> &Vec<Complex64> { spec.get(t).unwrap_or(&zero) };
    let advance: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * VOCODER_HOP as f64 * k as f64 / VOCODER_FFT as f64)
        .collect();
    let mut phase: Vec<f64> = spec[0].iter().map(|c| c.arg()).collect();
    let mut out = Vec::new();
    let mut step = 0.0f64;
    while step < n_frames as f64 {
        let t = step.floor() as usize;
        let alpha = step - t as f64;
        let (a, b) = (col(t), col(t + 1));
        let frame: Vec<Complex64> = (0..bins)
            .map(|k| {
                let mag = (1.0 - alpha) * a[k].norm() + alpha * b[k].norm();
                Complex64::from_polar(mag, phase[k])
            })
            .collect();
        out.push(frame);
        for k in 0..bins {
            let dphase = wrap_phase(b[k].arg() - a[k].arg() - advance[k]);
            phase[k] += advance[k] + dphase;
        }
        step = out.len() as f64 * rate;
    }
    stft.inverse(&out, out_len)
}

/// Shifts pitch by `semitones` while keeping the sample count.
pub fn pitch_shift(signal: &[f64], sample_rate: u32, semitones: f64) -> Vec<f64> {
    if semitones == 0.0 {
        return signal.to_vec();
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let shifted_rate = ((sample_rate as f64 / ratio).round() as u32).max(1);
    // played back at `sample_rate`, the resampled signal is `ratio` higher and shorter
    let resampled = resample_signal(signal, sample_rate, shifted_rate);
    let stretch = resampled.len() as f64 / signal.len() as f64;
    fit_length(&time_stretch(&resampled, stretch), signal.len())
}

/// Augmented copies of a working-rate clip, each fitted to the clip's length.
pub fn augment(clip: &AudioClip, params: &AugmentParams) -> Vec<(Variant, AudioClip)> {
    let n = clip.samples.len();
    params
        .variants()
        .into_iter()
        .map(|v| {
            let samples = match v {
                Variant::Original => clip.samples.clone(),
                Variant::TimeStretch(r) => fit_length(&time_stretch(&clip.samples, r), n),
                Variant::PitchShift(s) => pitch_shift(&clip.samples, clip.sample_rate, s),
            };
            (v, clip.with_samples(samples, clip.sample_rate))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::stft_magnitude;

    fn sine(freq: f64, sr: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr).sin()).collect()
    }

    fn peak_bin(x: &[f64]) -> usize {
        let m = stft_magnitude(x, 4096, 1024).unwrap();
        let mid = m.cols() / 2;
        (0..m.rows())
            .max_by(|&a, &b| m.get(a, mid).total_cmp(&m.get(b, mid)))
            .unwrap()
    }

    #[test]
    fn unit_rate_is_identity() {
        let x: Vec<f64> = sine(440.0, 22050.0, 22050)
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.1 * ((i * 31 % 17) as f64 / 17.0 - 0.5))
            .collect();
        let y = time_stretch(&x, 1.0);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn stretch_lengths() {
        let x = vec![0.1; 110250];
        assert_eq!(time_stretch(&x, 0.8).len(), 137812);
        assert_eq!(time_stretch(&x, 1.2).len(), 91875);
    }

    #[test]
    fn octave_up_doubles_the_peak_frequency() {
        let sr = 22050.0;
        let x = sine(440.0, sr, 44100);
        let y = pitch_shift(&x, 22050, 12.0);
        assert_eq!(y.len(), x.len());
        let bin_hz = sr / 4096.0;
        let got = peak_bin(&y) as f64 * bin_hz;
        assert!((got - 880.0).abs() <= bin_hz, "peak at {got} Hz");
    }

    #[test]
    fn stretch_preserves_pitch() {
        let sr = 22050.0;
        let x = sine(1000.0, sr, 44100);
        let y = time_stretch(&x, 0.8);
        let bin_hz = sr / 4096.0;
        assert!((peak_bin(&y) as f64 * bin_hz - 1000.0).abs() <= bin_hz);
    }

    #[test]
    fn four_tagged_variants() {
        let clip = AudioClip::new(sine(300.0, 22050.0, 110250), 22050, "c", 1, 1).unwrap();
        let v = augment(&clip, &AugmentParams::default());
        assert_eq!(v.len(), 4);
        let tags: std::collections::BTreeSet<String> = v.iter().map(|(t, _)| t.to_string()).collect();
        assert_eq!(tags.len(), 4);
        assert!(v.iter().all(|(_, c)| c.samples.len() == 110250));
        assert_eq!(Variant::PitchShift(-2.0).to_string(), "ps-2");
        assert_eq!(Variant::TimeStretch(0.8).to_string(), "ts0.8");
    }
}
