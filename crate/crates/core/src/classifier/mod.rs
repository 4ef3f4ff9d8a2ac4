//! Segment classifiers: the mel-input 2-D CNN baseline and the raw-waveform
//! stack that puts the transform layers underneath it.

pub mod voting;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MinMaxScaler, Segment};
use crate::mst::MstArchitecture;
use crate::nn::data::{chunks, gather, shuffled_batches};
use crate::nn::loss::cross_entropy_loss;
use crate::nn::ops::softmax_forward;
use crate::nn::{LayerSpec, ModelCheckpoint, NesterovConfig, Optimizer, Padding, Sequential, SgdNesterov, Tensor};

pub use voting::{argmax, vote, Voting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitVariant {
    /// 2-D CNN on log-mel segments.
    MelBaseline,
    /// Transform layers plus 2-D CNN, all Xavier-initialized and trained, with
    /// dropout after every transform nonlinearity.
    RawXavier,
    /// Transform layers loaded from a trained checkpoint and frozen.
    RawPretrainedFrozen,
}

impl InitVariant {
    pub const ALL: [InitVariant; 3] = [
        InitVariant::MelBaseline,
        InitVariant::RawXavier,
        InitVariant::RawPretrainedFrozen,
    ];

    pub fn is_raw(self) -> bool {
        self != InitVariant::MelBaseline
    }
}

impl fmt::Display for InitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitVariant::MelBaseline => "mel-baseline",
            InitVariant::RawXavier => "raw-xavier",
            InitVariant::RawPretrainedFrozen => "raw-pretrained-frozen",
        })
    }
}

impl FromStr for InitVariant {
    type Err = String;

    /// Accepts `mel-baseline` as well as `MEL_BASELINE` style names.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        InitVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == norm)
            .ok_or_else(|| {
                format!("unknown variant '{s}' (expected mel-baseline, raw-xavier or raw-pretrained-frozen)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiczakArchitecture {
    pub n_mels: usize,
    pub frames: usize,
    pub conv_a_filters: usize,
    pub conv_a_kernel: [usize; 2],
    pub pool_a_window: [usize; 2],
    pub pool_a_stride: [usize; 2],
    pub conv_b_filters: usize,
    pub conv_b_kernel: [usize; 2],
    pub pool_b_window: [usize; 2],
    pub pool_b_stride: [usize; 2],
    pub hidden: usize,
    pub dropout_keep: f64,
    pub classes: usize,
}

impl Default for PiczakArchitecture {
    fn default() -> Self {
        Self {
            n_mels: 60,
            frames: 101,
            conv_a_filters: 80,
            conv_a_kernel: [57, 6],
            pool_a_window: [4, 3],
            pool_a_stride: [1, 3],
            conv_b_filters: 80,
            conv_b_kernel: [1, 3],
            pool_b_window: [1, 3],
            pool_b_stride: [1, 3],
            hidden: 5000,
            dropout_keep: 0.5,
            classes: 50,
        }
    }
}

fn pair(a: [usize; 2]) -> (usize, usize) {
    (a[0], a[1])
}

impl PiczakArchitecture {
    pub fn input_shape(&self) -> Vec<usize> {
        vec![1, self.n_mels, self.frames]
    }

    /// Layers up to the logits; softmax is applied by [`Classifier::probabilities`].
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        let mut specs = vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                filters: self.conv_a_filters,
                kernel: pair(self.conv_a_kernel),
                stride: (1, 1),
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d {
                window: pair(self.pool_a_window),
                stride: pair(self.pool_a_stride),
            },
            LayerSpec::Conv2d {
                in_channels: self.conv_a_filters,
                filters: self.conv_b_filters,
                kernel: pair(self.conv_b_kernel),
                stride: (1, 1),
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d {
                window: pair(self.pool_b_window),
                stride: pair(self.pool_b_stride),
            },
            LayerSpec::Flatten,
        ];
        let flat = specs
            .iter()
            .try_fold(self.input_shape(), |s, l| l.output_shape(&s))?[0];
        specs.extend([
            LayerSpec::Dense {
                inputs: flat,
                outputs: self.hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout {
                keep_prob: self.dropout_keep,
            },
            LayerSpec::Dense {
                inputs: self.hidden,
                outputs: self.hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout {
                keep_prob: self.dropout_keep,
            },
            LayerSpec::Dense {
                inputs: self.hidden,
                outputs: self.classes,
            },
        ]);
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierArch {
    pub piczak: PiczakArchitecture,
    /// Keep probability of the dropout added to the transform layers in the
    /// Xavier-initialized raw variant.
    pub mst_dropout_keep: f64,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self {
            piczak: PiczakArchitecture::default(),
            mst_dropout_keep: 0.5,
        }
    }
}

/// Per-sample input shape and layer stack for a variant.
pub fn classifier_specs(
    variant: InitVariant,
    arch: &ClassifierArch,
    mst: &MstArchitecture,
) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
    let p = &arch.piczak;
    let mut specs = match variant {
        InitVariant::MelBaseline => Vec::new(),
        InitVariant::RawXavier => mst.layer_specs(Some(arch.mst_dropout_keep)),
        InitVariant::RawPretrainedFrozen => mst.layer_specs(None),
    };
    let input = if variant.is_raw() {
        if mst.n_mels != p.n_mels {
            return Err(Error::Config(format!(
                "transform emits {} bands but the 2-D CNN expects {}",
                mst.n_mels, p.n_mels
            )));
        }
        specs.push(LayerSpec::Reshape {
            shape: vec![1, p.n_mels, p.frames],
        });
        vec![1, p.frames * mst.stride1]
    } else {
        p.input_shape()
    };
    specs.extend(p.layer_specs()?);
    Ok((input, specs))
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub variant: InitVariant,
    pub net: Sequential<f32>,
    /// Number of leading layers that belong to the transform model.
    pub mst_layers: usize,
    pub input_shape: Vec<usize>,
}

/// Assembles a classifier. Every layer is Xavier-initialized from `seed`;
/// the frozen variant then overwrites and freezes the transform layers with
/// `mst_checkpoint`, which it requires.
pub fn build_classifier(
    variant: InitVariant,
    arch: &ClassifierArch,
    mst: &MstArchitecture,
    seed: u64,
    mst_checkpoint: Option<&ModelCheckpoint>,
) -> Result<Classifier> {
    let (input_shape, specs) = classifier_specs(variant, arch, mst)?;
    let mut net = Sequential::build(&specs, &input_shape, seed)?;
    let mst_layers = mst_layer_count(variant, &specs);
    if variant == InitVariant::RawPretrainedFrozen {
        let ck = mst_checkpoint.ok_or_else(|| {
            Error::Config("the pretrained variant needs a trained transform checkpoint".into())
        })?;
        if ck.layer_count() != mst_layers {
            return Err(Error::Checkpoint(format!(
                "transform checkpoint has {} layers, expected {mst_layers}",
                ck.layer_count()
            )));
        }
        ck.load_prefix(&mut net)?;
        net.set_frozen(0..mst_layers, true);
    }
    Ok(Classifier {
        variant,
        net,
        mst_layers,
        input_shape,
    })
}

/// The variant's layer stack with placeholder weights, ready for
/// [`Classifier::load`].
pub fn classifier_skeleton(variant: InitVariant, arch: &ClassifierArch, mst: &MstArchitecture) -> Result<Classifier> {
    let (input_shape, specs) = classifier_specs(variant, arch, mst)?;
    let mut net = Sequential::build(&specs, &input_shape, 0)?;
    let mst_layers = mst_layer_count(variant, &specs);
    if variant == InitVariant::RawPretrainedFrozen {
        net.set_frozen(0..mst_layers, true);
    }
    Ok(Classifier {
        variant,
        net,
        mst_layers,
        input_shape,
    })
}

fn mst_layer_count(variant: InitVariant, specs: &[LayerSpec]) -> usize {
    match variant {
        InitVariant::MelBaseline => 0,
        _ => specs
            .iter()
            .position(|s| matches!(s, LayerSpec::Reshape { .. }))
            .unwrap_or(0),
    }
}

impl Classifier {
    /// Class probabilities for a batch, one row per sample.
    pub fn probabilities(&self, x: &Tensor<f32>) -> Result<Vec<Vec<f32>>> {
        let p = softmax_forward(&self.net.forward(x)?);
        let classes = p.shape()[1];
        Ok(p.data().chunks(classes).map(|c| c.to_vec()).collect())
    }

    /// Little-endian bytes of every transform-layer parameter.
    pub fn mst_parameter_bytes(&self) -> Vec<u8> {
        self.net.layers[..self.mst_layers]
            .iter()
            .flat_map(|l| l.params.iter())
            .flat_map(|p| p.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn checkpoint(&self, mut metadata: BTreeMap<String, String>) -> ModelCheckpoint {
        metadata.insert("variant".into(), self.variant.to_string());
        ModelCheckpoint::from_model(&self.net, metadata)
    }

    pub fn load(&mut self, checkpoint: &ModelCheckpoint) -> Result<()> {
        checkpoint.load_into(&mut self.net)
    }
}

/// Min/max scaler over the log-mel of training segments.
pub fn fit_mel_scaler(train: &[Segment]) -> Result<MinMaxScaler> {
    MinMaxScaler::fit(train.iter().map(|s| s.log_mel.as_slice()))
}

/// Classifier inputs with labels and the clip each segment came from.
#[derive(Debug, Clone, Default)]
pub struct ClfDataset {
    pub inputs: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    /// Grouping key for voting: clip id, suffixed with the variant tag for
    /// augmented copies.
    pub groups: Vec<String>,
    pub sample_shape: Vec<usize>,
}

impl ClfDataset {
    /// Raw variants take the peak-normalized waveform; the mel baseline takes
    /// the log-mel rescaled with `scaler`.
    pub fn from_segments(
        segments: &[Segment],
        variant: InitVariant,
        scaler: Option<&MinMaxScaler>,
    ) -> Result<Self> {
        let mut d = ClfDataset::default();
        for s in segments {
            let (input, shape) = if variant.is_raw() {
                (s.raw.clone(), vec![1, s.raw.len()])
            } else {
                let sc = scaler.ok_or_else(|| {
                    Error::Config("mel inputs need a fitted min/max scaler".into())
                })?;
                (sc.apply_slice(&s.log_mel), vec![1, s.n_mels, s.frames])
            };
            if d.sample_shape.is_empty() {
                d.sample_shape = shape;
            } else if d.sample_shape != shape {
                return Err(Error::Shape(format!(
                    "segment shape {shape:?} differs from {:?}",
                    d.sample_shape
                )));
            }
            d.inputs.push(input);
            d.labels.push(s.class_label as usize);
            d.groups.push(if s.variant == "orig" {
                s.parent_clip.clone()
            } else {
                format!("{}#{}", s.parent_clip, s.variant)
            });
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-segment probabilities in dataset order.
pub fn segment_probabilities(model: &Classifier, data: &ClfDataset, chunk: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(data.len());
    for idx in chunks(data.len(), chunk) {
        let x = gather(&data.inputs, &idx, &data.sample_shape)?;
        out.extend(model.probabilities(&x)?);
    }
    Ok(out)
}

/// Clip label from the inputs of one clip's segments.
pub fn predict_clip(model: &Classifier, segments: &[Vec<f32>], voting: Voting) -> Result<usize> {
    if segments.is_empty() {
        return Err(Error::Shape("a clip needs at least one segment".into()));
    }
    let x = gather(segments, &(0..segments.len()).collect::<Vec<_>>(), &model.input_shape)?;
    Ok(vote(&model.probabilities(&x)?, voting))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip: String,
    pub label: usize,
    pub predicted: usize,
}

/// Groups segment probabilities by clip (sorted by clip key) and votes.
pub fn clip_predictions(probs: &[Vec<f32>], data: &ClfDataset, voting: Voting) -> Vec<ClipPrediction> {
    let mut groups: BTreeMap<&str, (usize, Vec<Vec<f32>>)> = BTreeMap::new();
    for ((p, g), &l) in probs.iter().zip(&data.groups).zip(&data.labels) {
        groups.entry(g.as_str()).or_insert_with(|| (l, Vec::new())).1.push(p.clone());
    }
    groups
        .into_iter()
        .map(|(clip, (label, ps))| ClipPrediction {
            clip: clip.to_string(),
            label,
            predicted: vote(&ps, voting),
        })
        .collect()
}

pub fn accuracy(preds: &[ClipPrediction]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds.iter().filter(|p| p.label == p.predicted).count() as f64 / preds.len() as f64
}

/// Rows are true classes, columns predictions.
pub fn confusion_matrix(preds: &[ClipPrediction], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for p in preds {
        m[p.label][p.predicted] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub arch: ClassifierArch,
    pub sgd: NesterovConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Segments per forward pass during evaluation.
    pub eval_chunk: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            arch: ClassifierArch::default(),
            sgd: NesterovConfig::default(),
            batch_size: 500,
            epochs: 200,
            seed: 0,
            eval_chunk: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClfEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Clip-level majority-vote accuracy on the validation set.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ClfOutcome {
    pub final_checkpoint: ModelCheckpoint,
    /// Highest validation accuracy, earliest epoch on ties; the final
    /// parameters when there is no validation set.
    pub best_checkpoint: ModelCheckpoint,
    pub best_epoch: usize,
    pub curve: Vec<ClfEpoch>,
}

impl ClfOutcome {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_acc\n");
        for e in &self.curve {
            let val = e.val_acc.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{val}\n", e.epoch, e.train_loss, e.train_acc));
        }
        s
    }
}

/// Mean cross-entropy and segment accuracy in evaluation mode.
pub fn evaluate_segments(model: &Classifier, data: &ClfDataset, chunk: usize) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for idx in chunks(data.len(), chunk) {
        let x = gather(&data.inputs, &idx, &data.sample_shape)?;
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let logits = model.net.forward(&x)?;
        let (l, _) = cross_entropy_loss(&logits, &labels)?;
        loss += l * idx.len() as f64;
        let c = logits.shape()[1];
        correct += logits
            .data()
            .chunks(c)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// SGD with Nesterov momentum on softmax cross-entropy for exactly
/// `cfg.epochs` epochs. Frozen layers are neither recorded nor updated.
pub fn train_classifier(
    model: &mut Classifier,
    train: &ClfDataset,
    validation: Option<&ClfDataset>,
    cfg: &ClassifierConfig,
) -> Result<ClfOutcome> {
    if train.is_empty() {
        return Err(Error::Training("empty classifier training set".into()));
    }
    if train.sample_shape != model.input_shape {
        return Err(Error::Shape(format!(
            "training inputs are {:?}, model expects {:?}",
            train.sample_shape, model.input_shape
        )));
    }
    let present: BTreeSet<usize> = train.labels.iter().copied().collect();
    if let Some(v) = validation {
        let missing: BTreeSet<usize> = v.labels.iter().filter(|l| !present.contains(l)).copied().collect();
        if !missing.is_empty() {
            warn!("classes {missing:?} have no training segments");
        }
    }

    let mut opt = SgdNesterov::new(&model.net, cfg.sgd);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4452_4f50);
    let val_acc = |m: &Classifier| -> Result<Option<f64>> {
        match validation {
            Some(v) if !v.is_empty() => {
                let probs = segment_probabilities(m, v, cfg.eval_chunk)?;
                Ok(Some(accuracy(&clip_predictions(&probs, v, Voting::Majority))))
            }
            _ => Ok(None),
        }
    };

    let (l0, a0) = evaluate_segments(model, train, cfg.eval_chunk)?;
    let v0 = val_acc(model)?;
    let mut curve = vec![ClfEpoch {
        epoch: 0,
        train_loss: l0,
        train_acc: a0,
        val_acc: v0,
    }];
    let mut best = (v0, 0usize, model.net.clone());

    for epoch in 1..=cfg.epochs {
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in shuffled_batches(train.len(), cfg.batch_size, &mut shuffle_rng) {
            let x = gather(&train.inputs, &idx, &train.sample_shape)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (logits, tape) = model.net.forward_train(x, &mut dropout_rng, false)?;
            let (loss, grad) = cross_entropy_loss(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            let c = logits.shape()[1];
            correct += logits
                .data()
                .chunks(c)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            let (grads, _) = model.net.backward(tape, grad)?;
            opt.step(&mut model.net, &grads);
            loss_sum += loss * idx.len() as f64;
        }
        let n = train.len() as f64;
        let va = val_acc(model)?;
        let row = ClfEpoch {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_acc: va,
        };
        info!(
            "{} epoch {epoch}: loss {:.4} acc {:.3} val {:?}",
            model.variant, row.train_loss, row.train_acc, va
        );
        curve.push(row);
        if let (Some(v), Some(b)) = (va, best.0) {
            if v > b {
                best = (va, epoch, model.net.clone());
            }
        }
    }

    let meta = |kind: &str, epoch: usize| {
        let mut m = BTreeMap::new();
        m.insert("kind".to_string(), kind.to_string());
        m.insert("epoch".to_string(), epoch.to_string());
        m.insert("seed".to_string(), cfg.seed.to_string());
        m
    };
    let final_checkpoint = model.checkpoint(meta("final", cfg.epochs));
    let (best_checkpoint, best_epoch) = if best.0.is_some() {
        let mut m = meta("best", best.1);
        m.insert("variant".into(), model.variant.to_string());
        (ModelCheckpoint::from_model(&best.2, m), best.1)
    } else {
        (model.checkpoint(meta("best", cfg.epochs)), cfg.epochs)
    };
    Ok(ClfOutcome {
        final_checkpoint,
        best_checkpoint,
        best_epoch,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mst::build_mst;

    fn small_mst() -> MstArchitecture {
        MstArchitecture {
            filters1: 8,
            filters2: 4,
            ..Default::default()
        }
    }

    fn small_arch() -> ClassifierArch {
        ClassifierArch {
            piczak: PiczakArchitecture {
                conv_a_filters: 4,
                conv_b_filters: 4,
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn piczak_shapes() {
        let specs = PiczakArchitecture::default().layer_specs().unwrap();
        let shape = specs
            .iter()
            .try_fold(vec![1, 60, 101], |s, l| l.output_shape(&s))
            .unwrap();
        assert_eq!(shape, vec![50]);
        assert_eq!(specs[7], LayerSpec::Dense { inputs: 800, outputs: 5000 });
    }

    #[test]
    fn mel_baseline_outputs_probabilities() {
        let c = build_classifier(InitVariant::MelBaseline, &small_arch(), &small_mst(), 1, None).unwrap();
        assert_eq!(c.input_shape, vec![1, 60, 101]);
        let x = Tensor::full(&[2, 1, 60, 101], 0.3f32);
        for p in c.probabilities(&x).unwrap() {
            assert_eq!(p.len(), 50);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn raw_input_length_is_frames_times_hop() {
        let c = build_classifier(InitVariant::RawXavier, &small_arch(), &small_mst(), 1, None).unwrap();
        assert_eq!(c.input_shape, vec![1, 51712]);
        assert_eq!(c.mst_layers, 9);
        assert_eq!(c.net.first_trainable(), 0);
    }

    #[test]
    fn frozen_variant_copies_checkpoint_bytes() {
        let mst = build_mst(&small_mst(), 5).unwrap();
        let ck = ModelCheckpoint::from_model(&mst, BTreeMap::new());
        let c = build_classifier(InitVariant::RawPretrainedFrozen, &small_arch(), &small_mst(), 9, Some(&ck)).unwrap();
        let want: Vec<u8> = ck
            .tensors
            .iter()
            .flat_map(|t| t.data.iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        assert_eq!(c.mst_parameter_bytes(), want);
        assert_eq!(c.mst_layers, 6);
        assert!(c.net.layers[..6].iter().all(|l| !l.is_trainable()));
        assert_eq!(c.net.first_trainable(), 7);
    }

    #[test]
    fn frozen_variant_rejects_mismatched_checkpoint() {
        let other = MstArchitecture {
            filters1: 16,
            ..small_mst()
        };
        let ck = ModelCheckpoint::from_model(&build_mst(&other, 5).unwrap(), BTreeMap::new());
        assert!(build_classifier(InitVariant::RawPretrainedFrozen, &small_arch(), &small_mst(), 9, Some(&ck)).is_err());
        assert!(build_classifier(InitVariant::RawPretrainedFrozen, &small_arch(), &small_mst(), 9, None).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in InitVariant::ALL {
            assert_eq!(v.to_string().parse::<InitVariant>().unwrap(), v);
        }
        assert_eq!("RAW_PRETRAINED_FROZEN".parse::<InitVariant>().unwrap(), InitVariant::RawPretrainedFrozen);
        assert!("raw".parse::<InitVariant>().is_err());
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let preds = vec![
            ClipPrediction { clip: "a".into(), label: 0, predicted: 0 },
            ClipPrediction { clip: "b".into(), label: 0, predicted: 1 },
            ClipPrediction { clip: "c".into(), label: 1, predicted: 1 },
        ];
        let m = confusion_matrix(&preds, 2);
        assert_eq!(m, vec![vec![1, 1], vec![0, 1]]);
        assert!((accuracy(&preds) - 2.0 / 3.0).abs() < 1e-12);
    }
}
