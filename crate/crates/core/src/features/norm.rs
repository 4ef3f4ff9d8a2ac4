use serde::{Deserialize, Serialize};

use super::{Matrix, MelSpectrogram};
use crate::error::{Error, Result};

/// Trainset statistics for standardize-then-rescale normalization of MST targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Population mean/std and extrema over every trainset log-mel value.
pub fn fit_norm_stats<'a>(values: impl IntoIterator<Item = &'a [f32]>) -> Result<NormStats> {
    let (mut n, mut sum, mut min, mut max) = (0usize, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let chunks: Vec<&[f32]> = values.into_iter().collect();
    for &v in chunks.iter().flat_map(|c| c.iter()) {
        let v = v as f64;
        n += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    if n == 0 {
        return Err(Error::DegenerateData("empty trainset".into()));
    }
    let mean = sum / n as f64;
    let var = chunks
        .iter()
        .flat_map(|c| c.iter())
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std <= 0.0 || max <= min {
        return Err(Error::DegenerateData(
            "trainset log-mel values have zero spread".into(),
        ));
    }
    Ok(NormStats { mean, std, min, max })
}

impl NormStats {
    fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    /// `z = (x - mean)/std`, then `2 (z - z_min)/(z_max - z_min) - 1`, clamped to [-1, 1].
    pub fn apply_value(&self, x: f64) -> f64 {
        let (zmin, zmax) = (self.z(self.min), self.z(self.max));
        (2.0 * (self.z(x) - zmin) / (zmax - zmin) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn apply_slice(&self, values: &[f32]) -> Vec<f32> {
        values
            .iter()
            .map(|&v| self.apply_value(v as f64) as f32)
            .collect()
    }

    pub fn apply(&self, mel: &MelSpectrogram) -> MelSpectrogram {
        let v = &mel.values;
        MelSpectrogram {
            values: Matrix::from_vec(
                v.rows(),
                v.cols(),
                v.data().iter().map(|&x| self.apply_value(x)).collect(),
            ),
        }
    }
}

/// Trainset min/max rescaling to [-1, 1] for classifier mel inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.into_iter().flat_map(|c| c.iter()) {
            min = min.min(v as f64);
            max = max.max(v as f64);
        }
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::DegenerateData("empty trainset".into()));
        }
        if max <= min {
            return Err(Error::DegenerateData("trainset mel values are constant".into()));
        }
        Ok(Self { min, max })
    }

    pub fn apply_value(&self, x: f64) -> f64 {
        (2.0 * (x - self.min) / (self.max - self.min) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn apply_slice(&self, values: &[f32]) -> Vec<f32> {
        values
            .iter()
            .map(|&v| self.apply_value(v as f64) as f32)
            .collect()
    }
}
