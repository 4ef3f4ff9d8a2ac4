//! Cross-validation driver: feature preparation, per-fold training of the
//! transform model and the classifier variants, evaluation with both voting
//! schemes, and report aggregation. Every stage reads and writes files in the
//! work directory so stages can run as separate processes.

pub mod config;
pub mod figures;
pub mod smoke;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

pub use config::{DataConfig, ExperimentConfig, Override, RunConfig, SmokeConfig, DATA_ENV};
pub use figures::Comparison;

use crate::audio::{conform, decode_wav, list_wavs, read_manifest, read_wav_samples, AudioClip};
use crate::classifier::{
    accuracy, build_classifier, classifier_skeleton, clip_predictions, confusion_matrix, fit_mel_scaler, segment_probabilities,
    train_classifier, ClfDataset, ClfOutcome, ClipPrediction, InitVariant, Voting,
};
use crate::error::{Error, Result};
use crate::features::cache::CachedClip;
use crate::features::{
    augment, fit_norm_stats, segment_clip_with_fallback, MelExtractor, MinMaxScaler, NormStats, Segment,
    SegmentKind, Variant,
};
use crate::mst::{export_filters, load_mst, predict_mel, train_mst, MstOutcome};
use crate::nn::ModelCheckpoint;

/// File layout inside the work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn cache_index(&self) -> PathBuf {
        self.cache_dir().join("index.csv")
    }

    pub fn mst_checkpoint(&self, fold: u8) -> PathBuf {
        self.root.join(format!("mst_fold{fold}.ckpt"))
    }

    pub fn mst_curve(&self, fold: u8) -> PathBuf {
        self.root.join(format!("mst_fold{fold}_curve.csv"))
    }

    pub fn clf_checkpoint(&self, v: InitVariant, fold: u8) -> PathBuf {
        self.root.join(format!("clf_{v}_fold{fold}.ckpt"))
    }

    pub fn clf_best_checkpoint(&self, v: InitVariant, fold: u8) -> PathBuf {
        self.root.join(format!("clf_{v}_fold{fold}_best.ckpt"))
    }

    pub fn clf_curve(&self, v: InitVariant, fold: u8) -> PathBuf {
        self.root.join(format!("clf_{v}_fold{fold}_curve.csv"))
    }

    pub fn evaluation(&self, v: InitVariant, fold: u8) -> PathBuf {
        self.root.join(format!("eval_{v}_fold{fold}.json"))
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn filters_stem(&self, fold: u8) -> String {
        format!("filters_fold{fold}")
    }

    pub fn spectrogram_stem(&self, clip: &str) -> String {
        format!("spectrogram_{clip}")
    }

    fn ensure(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }
}

fn require(path: &Path, hint: impl Into<String>) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.into(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))
}

/// Seed for one fold's model: tag 0 is the transform model, `1 + variant`
/// a classifier.
pub fn fold_seed(base: u64, fold: u8, tag: u64) -> u64 {
    base.wrapping_add(1000 * fold as u64 + tag)
}

/// Writes the synthetic smoke dataset unless it already exists.
pub fn ensure_smoke_dataset(cfg: &ExperimentConfig) -> Result<()> {
    let root = cfg.dataset_root()?;
    if root.join("audio").is_dir() {
        return Ok(());
    }
    smoke::generate_smoke_dataset(&root, &cfg.smoke, 7)?;
    Ok(())
}

fn source_clips(cfg: &ExperimentConfig) -> Result<Vec<AudioClip>> {
    let mut clips = Vec::new();
    if let Some(manifest) = &cfg.data.manifest {
        require(manifest, "check [data] manifest")?;
        for e in read_manifest(manifest)? {
            let (samples, rate) = read_wav_samples(&e.path)?;
            clips.push(AudioClip::new(samples, rate, e.clip_id, e.class_label, e.fold)?);
        }
    } else {
        let root = cfg.dataset_root()?;
        require(&root, format!("point [data] dataset or ${DATA_ENV} at the dataset root"))?;
        for path in list_wavs(&root)? {
            clips.push(decode_wav(&path)?);
        }
    }
    if clips.is_empty() {
        return Err(Error::DegenerateData("the dataset contains no clips".into()));
    }
    clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(clips)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexRow {
    clip_id: String,
    variant: String,
    fold: u8,
    class_label: u16,
    file: String,
    mst_segments: usize,
    clf_segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PrepareSummary {
    pub clips: usize,
    pub cached: usize,
    pub mst_segments: usize,
    pub clf_segments: usize,
}

/// Decodes every clip, conforms it to the working rate and length, derives
/// the augmented variants and writes one feature-cache file per clip variant.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.data.work_dir);
    let dir = ws.cache_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let extractor = MelExtractor::new(&cfg.features)?;
    let clips = source_clips(cfg)?;
    let mut rows = Vec::new();
    for source in &clips {
        let clip = conform(source, cfg.data.working_rate);
        let mut variants = vec![(Variant::Original, clip.clone())];
        variants.extend(augment(&clip, &cfg.augment));
        for (variant, vclip) in variants {
            let tag = variant.to_string();
            let cached = CachedClip::build(&vclip, &tag, &extractor)?;
            let file = format!("{}__{tag}.feat", clip.clip_id);
            cached.write(&dir.join(&file))?;
            rows.push(IndexRow {
                clip_id: clip.clip_id.clone(),
                variant: tag,
                fold: clip.fold,
                class_label: clip.class_label,
                file,
                mst_segments: cached.mst.len(),
                clf_segments: cached.clf.len(),
            });
        }
        info!("prepared {}", clip.clip_id);
    }
    let index = ws.cache_index();
    let mut w = csv::Writer::from_path(&index).map_err(|e| Error::Cache(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Cache(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&index, e))?;
    Ok(PrepareSummary {
        clips: clips.len(),
        cached: rows.len(),
        mst_segments: rows.iter().map(|r| r.mst_segments).sum(),
        clf_segments: rows.iter().map(|r| r.clf_segments).sum(),
    })
}

fn read_index(cfg: &ExperimentConfig) -> Result<Vec<IndexRow>> {
    let ws = Workspace::new(&cfg.data.work_dir);
    let index = ws.cache_index();
    require(&index, "run `melseed prepare` first")?;
    let mut r = csv::Reader::from_path(&index).map_err(|e| Error::Cache(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Cache(format!("{}: {e}", index.display()))))
        .collect()
}

/// Cached clip variants accepted by `keep(fold, variant)`, in index order.
pub fn load_cached(cfg: &ExperimentConfig, keep: impl Fn(u8, &str) -> bool) -> Result<Vec<CachedClip>> {
    let dir = Workspace::new(&cfg.data.work_dir).cache_dir();
    read_index(cfg)?
        .into_iter()
        .filter(|r| keep(r.fold, &r.variant))
        .map(|r| CachedClip::read(&dir.join(&r.file), &cfg.features))
        .collect()
}

/// Cached classifier segments, or the single fallback segment of a clip
/// whose windows are all silent.
fn clip_segments(c: &CachedClip, extractor: &MelExtractor) -> Result<Vec<Segment>> {
    if c.clf.is_empty() {
        segment_clip_with_fallback(&c.clip, &c.variant, extractor, SegmentKind::Classification)
    } else {
        Ok(c.clf.clone())
    }
}

fn norm_stats_of(ck: &ModelCheckpoint) -> Result<NormStats> {
    let text = ck
        .metadata
        .get("norm_stats")
        .ok_or_else(|| Error::Checkpoint("no normalization statistics in metadata".into()))?;
    serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("norm_stats: {e}")))
}

fn read_mst(cfg: &ExperimentConfig, fold: u8) -> Result<ModelCheckpoint> {
    let path = Workspace::new(&cfg.data.work_dir).mst_checkpoint(fold);
    require(&path, format!("run `melseed train-mst --fold {fold}` first"))?;
    ModelCheckpoint::read(&path)
}

/// Trains the transform model for test fold `fold` and writes its
/// checkpoint, curve, filter dump and a spectrogram comparison for the first
/// test-fold clip.
pub fn train_mst_fold(cfg: &ExperimentConfig, fold: u8) -> Result<MstOutcome> {
    let a = cfg.fold_assignment(fold)?;
    let ws = Workspace::new(&cfg.data.work_dir);
    ws.ensure()?;
    let include_aug = cfg.mst.include_augmented;
    let cached = load_cached(cfg, |f, v| {
        f != a.test_fold && (v == "orig" || (include_aug && a.is_train(f)))
    })?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in cached {
        if a.is_train(c.clip.fold) {
            train.extend(c.mst);
        } else {
            val.extend(c.mst);
        }
    }
    let stats = fit_norm_stats(train.iter().map(|s| s.log_mel.as_slice()))?;
    let mut mcfg = cfg.mst.clone();
    mcfg.seed = fold_seed(cfg.mst.seed, fold, 0);
    info!("fold {fold}: transform model on {} train / {} validation segments", train.len(), val.len());
    let mut outcome = train_mst(&train, &val, &stats, &mcfg, Some(&a))?;
    outcome.best.metadata.insert("fold".into(), fold.to_string());
    outcome.best.write(&ws.mst_checkpoint(fold))?;
    write_text(&ws.mst_curve(fold), &outcome.curve_csv())?;
    dump_filters(cfg, fold)?;
    let first_test = read_index(cfg)?
        .into_iter()
        .filter(|r| r.fold == fold && r.variant == "orig")
        .map(|r| r.clip_id)
        .min();
    if let Some(clip) = first_test {
        emit_comparison_figure(cfg, &clip, Some(fold))?;
    }
    Ok(outcome)
}

/// Writes `filters_fold{f}.csv` (one kernel per row) and its PNG.
pub fn dump_filters(cfg: &ExperimentConfig, fold: u8) -> Result<PathBuf> {
    let ws = Workspace::new(&cfg.data.work_dir);
    let filters = export_filters(&read_mst(cfg, fold)?)?;
    let stem = ws.filters_stem(fold);
    let csv = ws.root.join(format!("{stem}.csv"));
    write_text(&csv, &figures::matrix_csv(&filters))?;
    figures::write_filters_png(&filters, &ws.root.join(format!("{stem}.png")))?;
    Ok(csv)
}

/// Normalized target and predicted log-mel of the clip's first transform
/// segment, rendered side by side. The checkpoint defaults to the one whose
/// test fold holds the clip.
pub fn emit_comparison_figure(cfg: &ExperimentConfig, clip_id: &str, fold: Option<u8>) -> Result<Comparison> {
    let ws = Workspace::new(&cfg.data.work_dir);
    let mut found = load_cached(cfg, |_, v| v == "orig")?
        .into_iter()
        .find(|c| c.clip.clip_id == clip_id)
        .ok_or_else(|| Error::Config(format!("no clip '{clip_id}' in the feature cache")))?;
    let fold = fold.unwrap_or(found.clip.fold);
    let ck = read_mst(cfg, fold)?;
    let stats = norm_stats_of(&ck)?;
    let model = load_mst(&ck, &cfg.mst.arch)?;
    let extractor = MelExtractor::new(&cfg.features)?;
    if found.mst.is_empty() {
        found.mst = segment_clip_with_fallback(&found.clip, "orig", &extractor, SegmentKind::Mst)?;
    }
    let seg = &found.mst[0];
    let target = crate::features::Matrix::from_vec(
        seg.n_mels,
        seg.frames,
        stats.apply_slice(&seg.log_mel).iter().map(|&v| v as f64).collect(),
    );
    let predicted = predict_mel(&model, &seg.raw, &cfg.features)?;
    figures::write_comparison(clip_id, &target, &predicted, &ws.root, &ws.spectrogram_stem(clip_id))
}

fn datasets(
    cfg: &ExperimentConfig,
    variant: InitVariant,
    fold: u8,
    scaler: Option<&MinMaxScaler>,
) -> Result<(ClfDataset, ClfDataset, Option<MinMaxScaler>)> {
    let a = cfg.fold_assignment(fold)?;
    let extractor = MelExtractor::new(&cfg.features)?;
    let cached = load_cached(cfg, |f, v| a.is_train(f) || (f == a.validation_fold && v == "orig"))?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in &cached {
        if a.is_train(c.clip.fold) {
            train.extend(c.clf.iter().cloned());
        } else {
            val.extend(clip_segments(c, &extractor)?);
        }
    }
    let scaler = match (variant, scaler) {
        (InitVariant::MelBaseline, Some(s)) => Some(*s),
        (InitVariant::MelBaseline, None) => Some(fit_mel_scaler(&train)?),
        _ => None,
    };
    Ok((
        ClfDataset::from_segments(&train, variant, scaler.as_ref())?,
        ClfDataset::from_segments(&val, variant, scaler.as_ref())?,
        scaler,
    ))
}

/// Trains one classifier variant for test fold `fold` on all training-fold
/// segments including augmented copies.
pub fn train_clf_fold(cfg: &ExperimentConfig, variant: InitVariant, fold: u8) -> Result<ClfOutcome> {
    let ws = Workspace::new(&cfg.data.work_dir);
    ws.ensure()?;
    let mst = match variant {
        InitVariant::RawPretrainedFrozen => Some(read_mst(cfg, fold)?),
        _ => None,
    };
    let (train, val, scaler) = datasets(cfg, variant, fold, None)?;
    let mut ccfg = cfg.classifier.clone();
    ccfg.seed = fold_seed(cfg.classifier.seed, fold, 1 + variant as u64);
    let mut model = build_classifier(variant, &ccfg.arch, &cfg.mst.arch, ccfg.seed, mst.as_ref())?;
    info!("fold {fold}: {variant} on {} train / {} validation segments", train.len(), val.len());
    let mut outcome = train_classifier(&mut model, &train, Some(&val), &ccfg)?;
    for ck in [&mut outcome.final_checkpoint, &mut outcome.best_checkpoint] {
        ck.metadata.insert("fold".into(), fold.to_string());
        if let Some(s) = &scaler {
            ck.metadata
                .insert("mel_scaler".into(), serde_json::to_string(s).expect("serialize"));
        }
    }
    outcome.final_checkpoint.write(&ws.clf_checkpoint(variant, fold))?;
    outcome.best_checkpoint.write(&ws.clf_best_checkpoint(variant, fold))?;
    write_text(&ws.clf_curve(variant, fold), &outcome.curve_csv())?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingResult {
    pub voting: Voting,
    pub accuracy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<ClipPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    /// `final` or `best`.
    pub checkpoint: String,
    pub epoch: usize,
    pub results: Vec<VotingResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEval {
    pub variant: InitVariant,
    pub fold: u8,
    pub test_clips: usize,
    pub evaluations: Vec<CheckpointEval>,
}

fn checkpoint_epoch(ck: &ModelCheckpoint) -> usize {
    ck.metadata.get("epoch").and_then(|e| e.parse().ok()).unwrap_or(0)
}

/// Scores the final and best-validation checkpoints on the test fold with
/// both voting schemes and writes `eval_{variant}_fold{f}.json`.
pub fn evaluate_fold(cfg: &ExperimentConfig, variant: InitVariant, fold: u8) -> Result<FoldEval> {
    let ws = Workspace::new(&cfg.data.work_dir);
    let final_path = ws.clf_checkpoint(variant, fold);
    let hint = format!("run `melseed train-clf --variant {variant} --fold {fold}` first");
    require(&final_path, hint.clone())?;
    let best_path = ws.clf_best_checkpoint(variant, fold);
    require(&best_path, hint)?;
    let a = cfg.fold_assignment(fold)?;
    let extractor = MelExtractor::new(&cfg.features)?;
    let mut segments = Vec::new();
    let mut test_clips = 0;
    for c in load_cached(cfg, |f, v| f == a.test_fold && v == "orig")? {
        segments.extend(clip_segments(&c, &extractor)?);
        test_clips += 1;
    }
    let classes = cfg.classifier.arch.piczak.classes;
    let mut evaluations = Vec::new();
    for (name, path) in [("final", final_path), ("best", best_path)] {
        let ck = ModelCheckpoint::read(&path)?;
        let scaler: Option<MinMaxScaler> = match ck.metadata.get("mel_scaler") {
            Some(t) => Some(serde_json::from_str(t).map_err(|e| Error::Checkpoint(format!("mel_scaler: {e}")))?),
            None => None,
        };
        let mut model = classifier_skeleton(variant, &cfg.classifier.arch, &cfg.mst.arch)?;
        model.load(&ck)?;
        let data = ClfDataset::from_segments(&segments, variant, scaler.as_ref())?;
        let probs = segment_probabilities(&model, &data, cfg.classifier.eval_chunk)?;
        let results = Voting::ALL
            .into_iter()
            .map(|voting| {
                let preds = clip_predictions(&probs, &data, voting);
                VotingResult {
                    voting,
                    accuracy: accuracy(&preds),
                    confusion: confusion_matrix(&preds, classes),
                    predictions: preds,
                }
            })
            .collect();
        evaluations.push(CheckpointEval {
            checkpoint: name.into(),
            epoch: checkpoint_epoch(&ck),
            results,
        });
    }
    let out = FoldEval {
        variant,
        fold,
        test_clips,
        evaluations,
    };
    write_json(&ws.evaluation(variant, fold), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub variant: InitVariant,
    pub checkpoint: String,
    pub voting: Voting,
    /// Test accuracy keyed by fold number.
    pub fold_accuracies: BTreeMap<u8, f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub overrides: Vec<Override>,
    pub cells: Vec<ReportCell>,
    pub folds: Vec<FoldEval>,
}

impl EvaluationReport {
    pub fn cell(&self, variant: InitVariant, checkpoint: &str, voting: Voting) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.checkpoint == checkpoint && c.voting == voting)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,checkpoint,voting,fold,accuracy\n");
        for c in &self.cells {
            for (f, acc) in &c.fold_accuracies {
                s.push_str(&format!("{},{},{},{f},{acc}\n", c.variant, c.checkpoint, c.voting));
            }
            s.push_str(&format!("{},{},{},mean,{}\n", c.variant, c.checkpoint, c.voting, c.mean));
            s.push_str(&format!("{},{},{},std,{}\n", c.variant, c.checkpoint, c.voting, c.std));
        }
        s
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Builds a report from per-fold evaluations.
pub fn aggregate(cfg: &ExperimentConfig, folds: Vec<FoldEval>) -> EvaluationReport {
    let mut cells = Vec::new();
    for &variant in &cfg.experiment.variants {
        for checkpoint in ["final", "best"] {
            for voting in Voting::ALL {
                let fold_accuracies: BTreeMap<u8, f64> = folds
                    .iter()
                    .filter(|f| f.variant == variant)
                    .filter_map(|f| {
                        let e = f.evaluations.iter().find(|e| e.checkpoint == checkpoint)?;
                        let r = e.results.iter().find(|r| r.voting == voting)?;
                        Some((f.fold, r.accuracy))
                    })
                    .collect();
                let (mean, std) = mean_std(&fold_accuracies.values().copied().collect::<Vec<_>>());
                cells.push(ReportCell {
                    variant,
                    checkpoint: checkpoint.into(),
                    voting,
                    fold_accuracies,
                    mean,
                    std,
                });
            }
        }
    }
    EvaluationReport {
        config: cfg.clone(),
        overrides: cfg.overrides(),
        cells,
        folds,
    }
}

/// Collects `eval_*.json` for the configured variants and folds, writes
/// `report.json` and `report.csv`.
pub fn report(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let ws = Workspace::new(&cfg.data.work_dir);
    let mut folds = Vec::new();
    for &variant in &cfg.experiment.variants {
        for &fold in &cfg.experiment.folds {
            let path = ws.evaluation(variant, fold);
            require(&path, format!("run `melseed evaluate --variant {variant} --folds {fold}` first"))?;
            folds.push(read_json(&path)?);
        }
    }
    let r = aggregate(cfg, folds);
    write_json(&ws.report_json(), &r)?;
    write_text(&ws.report_csv(), &r.to_csv())?;
    Ok(r)
}

/// Every stage for every configured fold and variant, then the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    prepare(cfg)?;
    for &fold in &cfg.experiment.folds {
        train_mst_fold(cfg, fold)?;
        for &variant in &cfg.experiment.variants {
            train_clf_fold(cfg, variant, fold)?;
            evaluate_fold(cfg, variant, fold)?;
        }
    }
    report(cfg)
}
