//! Log-mel targets, normalization, segmentation, and augmentation.

mod augment;
pub mod cache;
mod mel;
mod norm;
mod segment;
mod stft;

use serde::{Deserialize, Serialize};

pub use augment::{augment, pitch_shift, time_stretch, AugmentParams, Variant};
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz};
pub use norm::{fit_norm_stats, MinMaxScaler, NormStats};
pub use segment::{
    is_silent, normalize_peak, segment_clip, segment_clip_with_fallback, segment_starts, Segment,
    SegmentKind,
};
pub use stft::{frame_count, hann, reflect_index, stft_magnitude, Stft};

use crate::error::Result;

/// Row-major 2-D array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut m = Matrix::zeros(self.rows, end - start);
        for r in 0..self.rows {
            m.data[r * m.cols..(r + 1) * m.cols]
                .copy_from_slice(&self.data[r * self.cols + start..r * self.cols + end]);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub log_eps: f64,
    /// Mel frames per segment window.
    pub segment_frames: usize,
    pub overlap: f64,
    /// Peak amplitude below which a segment counts as silent.
    pub silence_threshold: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 512,
            n_mels: 60,
            log_eps: 1e-10,
            segment_frames: 101,
            overlap: 0.5,
            silence_threshold: 1e-3,
        }
    }
}

impl FeatureParams {
    /// Window stride in frames.
    pub fn segment_stride(&self) -> usize {
        ((self.segment_frames as f64 * (1.0 - self.overlap)).floor() as usize).max(1)
    }
}

/// Log-mel grid, `n_mels x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Matrix,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }
}

/// STFT plan plus filterbank for repeated log-mel extraction.
#[derive(Debug, Clone)]
pub struct MelExtractor {
    params: FeatureParams,
    stft: Stft,
    filterbank: Matrix,
}

impl MelExtractor {
    pub fn new(params: &FeatureParams) -> Result<Self> {
        Ok(Self {
            params: params.clone(),
            stft: Stft::new(params.n_fft, params.hop),
            filterbank: mel_filterbank(params.n_mels, params.n_fft, params.sample_rate)?,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn filterbank(&self) -> &Matrix {
        &self.filterbank
    }

    /// Centered-frame log-mel spectrogram of `signal`.
    pub fn log_mel(&self, signal: &[f64]) -> Result<MelSpectrogram> {
        let mag = self.stft.magnitude(signal)?;
        Ok(MelSpectrogram {
            values: log_mel(&mag, &self.filterbank, self.params.log_eps)?,
        })
    }
}
