//! Slaney-style mel filterbank and the log-mel map.

use super::Matrix;
use crate::error::{Error, Result};
use crate::nn::Scalar;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    let min_log_mel = MIN_LOG_HZ / F_SP;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    let min_log_mel = MIN_LOG_HZ / F_SP;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (log_step() * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

/// `n_mels x (n_fft/2 + 1)` triangular filters spanning 0 Hz to Nyquist,
/// equally spaced in mel and area-normalized by `2 / (f_hi - f_lo)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Matrix> {
    if n_mels == 0 {
        return Err(Error::Filterbank("need at least one mel band".into()));
    }
    if n_fft == 0 || !n_fft.is_multiple_of(2) {
        return Err(Error::Filterbank(format!("n_fft {n_fft} must be even and positive")));
    }
    let bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let fft_freqs: Vec<f64> = (0..bins).map(|k| k as f64 * nyquist / (bins - 1) as f64).collect();
    let (mel_lo, mel_hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        let mut any = false;
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            let w = rising.min(falling).max(0.0);
            if w > 0.0 {
                any = true;
            }
            fb.set(m, k, w * norm);
        }
        if !any {
            return Err(Error::Filterbank(format!(
                "mel band {m} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; too many bands for n_fft {n_fft}"
            )));
        }
    }
    Ok(fb)
}

/// `ln(filterbank @ magnitude + eps)`, `n_mels x frames`.
pub fn log_mel(magnitude: &Matrix, filterbank: &Matrix, eps: f64) -> Result<Matrix> {
    if filterbank.cols() != magnitude.rows() {
        return Err(Error::Shape(format!(
            "filterbank has {} bins, spectrum {}",
            filterbank.cols(),
            magnitude.rows()
        )));
    }
    let (m, k, n) = (filterbank.rows(), filterbank.cols(), magnitude.cols());
    let mut out = Matrix::zeros(m, n);
    f64::gemm(
        m,
        k,
        n,
        1.0,
        filterbank.data(),
        k as isize,
        1,
        magnitude.data(),
        n as isize,
        1,
        0.0,
        out.data_mut(),
        n as isize,
        1,
    );
    out.data_mut().iter_mut().for_each(|v| *v = (*v + eps).ln());
    Ok(out)
}
