//! The mel-spectrogram transform model: three SAME-padded 1-D convolutions
//! that regress normalized log-mel frames from raw waveform.
//!
//! The first layer's kernel and stride equal the STFT window and hop, so one
//! output step corresponds to one spectrogram frame.

use std::collections::BTreeMap;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::FoldAssignment;
use crate::error::{Error, Result};
use crate::features::{FeatureParams, Matrix, NormStats, Segment};
use crate::nn::data::{chunks, gather, shuffled_batches};
use crate::nn::loss::mse_loss;
use crate::nn::{Adam, AdamConfig, LayerSpec, ModelCheckpoint, Optimizer, Padding, Sequential, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MstArchitecture {
    pub filters1: usize,
    pub kernel1: usize,
    pub stride1: usize,
    pub filters2: usize,
    pub kernel2: usize,
    /// Output channels; one per mel band.
    pub n_mels: usize,
    pub kernel3: usize,
}

impl Default for MstArchitecture {
    fn default() -> Self {
        Self {
            filters1: 512,
            kernel1: 1024,
            stride1: 512,
            filters2: 256,
            kernel2: 3,
            n_mels: 60,
            kernel3: 3,
        }
    }
}

impl MstArchitecture {
    /// Layer stack; with `dropout_keep`, a dropout layer follows every nonlinearity.
    pub fn layer_specs(&self, dropout_keep: Option<f64>) -> Vec<LayerSpec> {
        let conv = |in_channels, filters, kernel, stride| LayerSpec::Conv1d {
            in_channels,
            filters,
            kernel,
            stride,
            padding: Padding::Same,
        };
        let blocks = [
            (conv(1, self.filters1, self.kernel1, self.stride1), LayerSpec::Relu),
            (conv(self.filters1, self.filters2, self.kernel2, 1), LayerSpec::Relu),
            (conv(self.filters2, self.n_mels, self.kernel3, 1), LayerSpec::Tanh),
        ];
        let mut specs = Vec::new();
        for (c, act) in blocks {
            specs.push(c);
            specs.push(act);
            if let Some(keep_prob) = dropout_keep {
                specs.push(LayerSpec::Dropout { keep_prob });
            }
        }
        specs
    }

    /// Output time steps for `input_len` samples: `ceil(input_len / stride1)`.
    pub fn output_frames(&self, input_len: usize) -> usize {
        input_len.div_ceil(self.stride1)
    }
}

/// Xavier-initialized transform model.
pub fn build_mst(arch: &MstArchitecture, seed: u64) -> Result<Sequential<f32>> {
    Sequential::build(&arch.layer_specs(None), &[1, arch.stride1], seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MstConfig {
    pub arch: MstArchitecture,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Train on augmented variants as well as original clips.
    pub include_augmented: bool,
}

impl Default for MstConfig {
    fn default() -> Self {
        Self {
            arch: MstArchitecture::default(),
            adam: AdamConfig::default(),
            batch_size: 100,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            include_augmented: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MstEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct MstOutcome {
    /// Parameters with the lowest validation MSE (epoch 0 is the initialization).
    pub best: ModelCheckpoint,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub curve: Vec<MstEpoch>,
}

impl MstOutcome {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for e in &self.curve {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        s
    }
}

/// Rejects training data drawn from the held-out folds.
pub fn check_fold_hygiene(
    train: &[Segment],
    validation: &[Segment],
    assignment: &FoldAssignment,
) -> Result<()> {
    if let Some(s) = train.iter().find(|s| !assignment.is_train(s.fold)) {
        return Err(Error::Training(format!(
            "training segment from {} is in fold {}, outside train folds {:?}",
            s.parent_clip, s.fold, assignment.train_folds
        )));
    }
    if let Some(s) = validation.iter().find(|s| s.fold != assignment.validation_fold) {
        return Err(Error::Training(format!(
            "validation segment from {} is in fold {}, expected {}",
            s.parent_clip, s.fold, assignment.validation_fold
        )));
    }
    Ok(())
}

struct Pairs {
    inputs: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
    input_shape: [usize; 2],
    target_shape: [usize; 2],
}

fn pairs(segments: &[Segment], stats: &NormStats) -> Result<Pairs> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Training("no segments".into()))?;
    let (len, n_mels, frames) = (first.raw.len(), first.n_mels, first.frames);
    if segments
        .iter()
        .any(|s| s.raw.len() != len || s.n_mels != n_mels || s.frames != frames)
    {
        return Err(Error::Shape("segments differ in geometry".into()));
    }
    Ok(Pairs {
        inputs: segments.iter().map(|s| s.raw.clone()).collect(),
        targets: segments.iter().map(|s| stats.apply_slice(&s.log_mel)).collect(),
        input_shape: [1, len],
        target_shape: [n_mels, frames],
    })
}

fn mean_mse(model: &Sequential<f32>, data: &Pairs, chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for idx in chunks(data.inputs.len(), chunk) {
        let x = gather(&data.inputs, &idx, &data.input_shape)?;
        let y = gather(&data.targets, &idx, &data.target_shape)?;
        let (l, _) = mse_loss(&model.forward(&x)?, &y)?;
        total += l * y.len() as f64;
        count += y.len();
    }
    Ok(total / count as f64)
}

/// Adam on MSE against normalized targets, with early stopping on validation
/// MSE. With no validation segments the training MSE drives early stopping.
pub fn train_mst(
    train: &[Segment],
    validation: &[Segment],
    stats: &NormStats,
    cfg: &MstConfig,
    hygiene: Option<&FoldAssignment>,
) -> Result<MstOutcome> {
    if train.is_empty() {
        return Err(Error::Training("empty MST training set".into()));
    }
    if let Some(a) = hygiene {
        check_fold_hygiene(train, validation, a)?;
    }
    let train_data = pairs(train, stats)?;
    let val_data = if validation.is_empty() {
        None
    } else {
        Some(pairs(validation, stats)?)
    };
    let expected = cfg.arch.output_frames(train_data.input_shape[1]);
    if train_data.target_shape != [cfg.arch.n_mels, expected] {
        return Err(Error::Shape(format!(
            "targets are {:?} but the model emits [{}, {expected}]",
            train_data.target_shape, cfg.arch.n_mels
        )));
    }

    let mut model = build_mst(&cfg.arch, cfg.seed)?;
    let mut opt = Adam::new(&model, cfg.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4452_4f50);
    let eval_chunk = cfg.batch_size.max(1);

    let score = |m: &Sequential<f32>, train_mse: f64| -> Result<f64> {
        match &val_data {
            Some(v) => mean_mse(m, v, eval_chunk),
            None => Ok(train_mse),
        }
    };
    let init_train = mean_mse(&model, &train_data, eval_chunk)?;
    let init_val = score(&model, init_train)?;
    let mut curve = vec![MstEpoch {
        epoch: 0,
        train_mse: init_train,
        val_mse: init_val,
    }];
    let mut best_val = init_val;
    let mut best_epoch = 0;
    let mut best_model = model.clone();
    let mut since = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        for idx in shuffled_batches(train_data.inputs.len(), cfg.batch_size, &mut shuffle_rng) {
            let x = gather(&train_data.inputs, &idx, &train_data.input_shape)?;
            let y = gather(&train_data.targets, &idx, &train_data.target_shape)?;
            let (pred, tape) = model.forward_train(x, &mut dropout_rng, false)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            let (grads, _) = model.backward(tape, grad)?;
            opt.step(&mut model, &grads);
            sum += loss * idx.len() as f64;
            count += idx.len();
        }
        let train_mse = sum / count as f64;
        let val_mse = score(&model, train_mse)?;
        curve.push(MstEpoch {
            epoch,
            train_mse,
            val_mse,
        });
        info!("mst epoch {epoch}: train {train_mse:.5} val {val_mse:.5}");
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_model = model.clone();
            since = 0;
        } else {
            since += 1;
            if since > cfg.patience {
                break;
            }
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), "mst".into());
    meta.insert("best_epoch".into(), best_epoch.to_string());
    meta.insert("best_val_mse".into(), format!("{best_val:e}"));
    meta.insert("epochs_run".into(), (curve.len() - 1).to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    meta.insert(
        "norm_stats".into(),
        serde_json::to_string(stats).expect("stats serialize"),
    );
    Ok(MstOutcome {
        best: ModelCheckpoint::from_model(&best_model, meta),
        best_epoch,
        best_val_mse: best_val,
        curve,
    })
}

/// Restores a trained transform model, checking its architecture.
pub fn load_mst(checkpoint: &ModelCheckpoint, arch: &MstArchitecture) -> Result<Sequential<f32>> {
    let mut m = build_mst(arch, 0)?;
    checkpoint.load_into(&mut m)?;
    Ok(m)
}

/// Predicted normalized log-mel (`n_mels x frames`) for one peak-normalized
/// MST segment of exactly `(segment_frames - 1) * hop` samples.
pub fn predict_mel(model: &Sequential<f32>, raw: &[f32], params: &FeatureParams) -> Result<Matrix> {
    let want = (params.segment_frames - 1) * params.hop;
    if raw.len() != want {
        return Err(Error::Shape(format!(
            "MST input must have {want} samples, got {}",
            raw.len()
        )));
    }
    let x = Tensor::from_vec(&[1, 1, raw.len()], raw.to_vec())?;
    let y = model.forward(&x)?;
    let (rows, cols) = (y.shape()[1], y.shape()[2]);
    Ok(Matrix::from_vec(
        rows,
        cols,
        y.data().iter().map(|&v| v as f64).collect(),
    ))
}

/// First-layer kernels as a `filters x kernel` matrix.
pub fn export_filters(checkpoint: &ModelCheckpoint) -> Result<Matrix> {
    let t = checkpoint
        .tensor("layer0.weight")
        .ok_or_else(|| Error::Checkpoint("no first-layer weight".into()))?;
    match t.shape[..] {
        [filters, 1, kernel] => Ok(Matrix::from_vec(
            filters,
            kernel,
            t.data.iter().map(|&v| v as f64).collect(),
        )),
        _ => Err(Error::Checkpoint(format!(
            "first-layer weight has shape {:?}, expected [filters, 1, kernel]",
            t.shape
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::xavier_bound;

    #[test]
    fn output_shapes() {
        let m = build_mst(&MstArchitecture::default(), 0).unwrap();
        assert_eq!(m.output_shape(&[1, 51200]).unwrap(), vec![60, 100]);
        assert_eq!(m.output_shape(&[1, 512]).unwrap(), vec![60, 1]);
        assert_eq!(m.output_shape(&[1, 51712]).unwrap(), vec![60, 101]);
        let y = m.forward(&Tensor::zeros(&[1, 1, 512])).unwrap();
        assert_eq!(y.shape(), &[1, 60, 1]);
    }

    #[test]
    fn first_layer_parameter_count() {
        let m = build_mst(&MstArchitecture::default(), 0).unwrap();
        let n: usize = m.layers[0].params.iter().map(|p| p.len()).sum();
        assert_eq!(n, 512 * 1024 + 512);
    }

    #[test]
    fn zero_input_gives_bias_path_constant() {
        let arch = MstArchitecture {
            filters1: 8,
            filters2: 4,
            ..Default::default()
        };
        let mut m = build_mst(&arch, 3).unwrap();
        for (li, layer) in m.layers.iter_mut().enumerate() {
            if let Some(b) = layer.params.get_mut(1) {
                for (i, v) in b.data_mut().iter_mut().enumerate() {
                    *v = 0.01 * (i as f32 + li as f32) - 0.02;
                }
            }
        }
        let params = FeatureParams::default();
        let out = predict_mel(&m, &vec![0.0; 51200], &params).unwrap();
        // interior frames see no padding effects, so each band is constant there
        for r in 0..out.rows() {
            let v = out.get(r, 5);
            for c in 2..out.cols() - 2 {
                assert_eq!(out.get(r, c), v);
            }
        }
        assert!(out.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn predict_rejects_wrong_length() {
        let m = build_mst(&MstArchitecture::default(), 0).unwrap();
        assert!(predict_mel(&m, &[0.0; 1000], &FeatureParams::default()).is_err());
    }

    #[test]
    fn exported_filters_are_bounded_by_xavier() {
        let m = build_mst(&MstArchitecture::default(), 9).unwrap();
        let ck = ModelCheckpoint::from_model(&m, BTreeMap::new());
        let f = export_filters(&ck).unwrap();
        assert_eq!((f.rows(), f.cols()), (512, 1024));
        let bound = xavier_bound(&[512, 1, 1024]);
        assert!(f.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn dropout_variant_inserts_three_layers() {
        let a = MstArchitecture::default();
        assert_eq!(a.layer_specs(None).len(), 6);
        assert_eq!(a.layer_specs(Some(0.5)).len(), 9);
    }
}
