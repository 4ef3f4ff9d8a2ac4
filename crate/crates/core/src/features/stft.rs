//! Short-time Fourier transform with centered, reflection-padded frames.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Matrix;
use crate::error::{Error, Result};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into a signal of length `n` under whole-sample mirror reflection
/// (the edge sample is not repeated).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Number of centered frames: `1 + len / hop`.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Reusable STFT plan.
#[derive(Clone)]
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("n_fft", &self.n_fft)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        assert!(n_fft >= 2 && hop >= 1, "invalid STFT geometry");
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann(n_fft),
            fft: planner.plan_fft_forward(n_fft),
            ifft: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Complex spectrum, one `Vec` of `bins()` values per frame.
    pub fn complex(&self, signal: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        if signal.is_empty() {
            return Err(Error::Shape("STFT of an empty signal".into()));
        }
        let half = (self.n_fft / 2) as isize;
        let frames = frame_count(signal.len(), self.hop);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = (t * self.hop) as isize - half;
            for (j, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                let idx = start + j as isize;
                let v = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize]
                } else {
                    signal[reflect_index(idx, signal.len())]
                };
                *b = Complex64::new(v * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            out.push(buf[..self.bins()].to_vec());
        }
        Ok(out)
    }

    /// Magnitude spectrogram, `bins x frames`.
    pub fn magnitude(&self, signal: &[f64]) -> Result<Matrix> {
        let spec = self.complex(signal)?;
        let (bins, frames) = (self.bins(), spec.len());
        let mut m = Matrix::zeros(bins, frames);
        for (t, col) in spec.iter().enumerate() {
            for (k, c) in col.iter().enumerate() {
                m.set(k, t, c.norm());
            }
        }
        Ok(m)
    }

    /// Inverse of [`Stft::complex`] by windowed overlap-add, normalized by the
    /// summed squared window and trimmed to `length` samples.
    pub fn inverse(&self, frames: &[Vec<Complex64>], length: usize) -> Vec<f64> {
        let n = self.n_fft;
        let total = n + self.hop * frames.len().saturating_sub(1);
        let mut acc = vec![0.0; total];
        let mut wsum = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.ifft.get_inplace_scratch_len()];
        for (t, col) in frames.iter().enumerate() {
            // rebuild the Hermitian-symmetric full spectrum
            buf[..col.len()].copy_from_slice(col);
            for k in 1..n - col.len() + 1 {
                buf[n - k] = col[k].conj();
            }
            buf[0].im = 0.0;
            if n.is_multiple_of(2) {
                buf[n / 2].im = 0.0;
            }
            self.ifft.process_with_scratch(&mut buf, &mut scratch);
            let off = t * self.hop;
            for j in 0..n {
                let w = self.window[j];
                acc[off + j] += buf[j].re / n as f64 * w;
                wsum[off + j] += w * w;
            }
        }
        let half = n / 2;
        (0..length)
            .map(|i| {
                let k = i + half;
                if k < total && wsum[k] > 1e-10 {
                    acc[k] / wsum[k]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Magnitude STFT, `window_size/2 + 1` bins by `1 + len/hop` frames.
pub fn stft_magnitude(signal: &[f64], window_size: usize, hop: usize) -> Result<Matrix> {
    Stft::new(window_size, hop).magnitude(signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_matches_numpy_reflect() {
        // np.pad([0,1,2,3], 3, mode="reflect") -> [3,2,1,0,1,2,3,2,1,0]
        let idx: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn zero_signal_gives_zero_grid() {
        let m = stft_magnitude(&vec![0.0; 51200], 1024, 512).unwrap();
        assert_eq!((m.rows(), m.cols()), (513, 101));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(51200, 512), 101);
        assert_eq!(frame_count(51712, 512), 102);
        assert_eq!(frame_count(110250, 512), 216);
    }

    #[test]
    fn empty_signal_is_an_error() {
        assert!(stft_magnitude(&[], 1024, 512).is_err());
    }

    #[test]
    fn inverse_reconstructs() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let s = Stft::new(256, 64);
        let y = s.inverse(&s.complex(&x).unwrap(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
