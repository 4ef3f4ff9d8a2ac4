//! Clip ingestion: WAV decoding, resampling to the working rate, and the
//! five-fold split used for cross-validation.

mod resample;
mod wav;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use resample::{resample_signal, Resampler, HALF_WIDTH_ZEROS, KAISER_BETA};
pub use wav::{decode_wav, parse_clip_name, read_manifest, read_wav_samples, write_wav_pcm16, ManifestEntry};

use crate::error::{Error, Result};

pub const WORKING_RATE: u32 = 22050;
pub const CLIP_SECONDS: f64 = 5.0;
pub const NUM_FOLDS: u8 = 5;
pub const NUM_CLASSES: usize = 50;

/// Decoded mono waveform with its dataset metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub clip_id: String,
    pub class_label: u16,
    pub fold: u8,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        clip_id: impl Into<String>,
        class_label: u16,
        fold: u8,
    ) -> Result<Self> {
        validate_meta(class_label, fold)?;
        if sample_rate == 0 {
            return Err(Error::Metadata("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            clip_id: clip_id.into(),
            class_label,
            fold,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            clip_id: self.clip_id.clone(),
            class_label: self.class_label,
            fold: self.fold,
        }
    }
}

pub(crate) fn validate_meta(class_label: u16, fold: u8) -> Result<()> {
    if !(1..=NUM_FOLDS).contains(&fold) {
        return Err(Error::Metadata(format!("fold {fold} outside 1..=5")));
    }
    if class_label as usize >= NUM_CLASSES {
        return Err(Error::Metadata(format!(
            "class label {class_label} outside 0..{NUM_CLASSES}"
        )));
    }
    Ok(())
}

/// Resamples a clip with the windowed-sinc polyphase resampler.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    let samples = resample_signal(&clip.samples, clip.sample_rate, target_rate);
    clip.with_samples(samples, target_rate)
}

/// Zero-pads or truncates to exactly `len` samples.
pub fn fit_length(samples: &[f64], len: usize) -> Vec<f64> {
    let mut v = samples[..samples.len().min(len)].to_vec();
    v.resize(len, 0.0);
    v
}

/// Decodes, resamples to the working rate and pads to the nominal clip length.
pub fn load_clip(path: &Path, working_rate: u32) -> Result<AudioClip> {
    let clip = decode_wav(path)?;
    Ok(conform(&clip, working_rate))
}

/// Resamples to `working_rate` and fixes the length at five seconds.
pub fn conform(clip: &AudioClip, working_rate: u32) -> AudioClip {
    let r = if clip.sample_rate == working_rate {
        clip.clone()
    } else {
        resample(clip, working_rate)
    };
    let target = (CLIP_SECONDS * working_rate as f64).round() as usize;
    let samples = fit_length(&r.samples, target);
    r.with_samples(samples, working_rate)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub train_folds: BTreeSet<u8>,
    pub validation_fold: u8,
    pub test_fold: u8,
}

impl FoldAssignment {
    pub fn new(test_fold: u8, validation_fold: u8) -> Result<Self> {
        for f in [test_fold, validation_fold] {
            if !(1..=NUM_FOLDS).contains(&f) {
                return Err(Error::Config(format!("fold {f} outside 1..=5")));
            }
        }
        if test_fold == validation_fold {
            return Err(Error::Config(format!(
                "test and validation fold are both {test_fold}"
            )));
        }
        let train_folds = (1..=NUM_FOLDS)
            .filter(|f| *f != test_fold && *f != validation_fold)
            .collect();
        Ok(Self {
            train_folds,
            validation_fold,
            test_fold,
        })
    }

    /// Test fold `f` validates on `(f mod 5) + 1`.
    pub fn for_test_fold(test_fold: u8) -> Result<Self> {
        Self::new(test_fold, test_fold % NUM_FOLDS + 1)
    }

    pub fn is_train(&self, fold: u8) -> bool {
        self.train_folds.contains(&fold)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Routes each clip into exactly one split by its fold.
pub fn assign_folds(
    clips: Vec<AudioClip>,
    test_fold: u8,
    validation_fold: u8,
) -> Result<Splits<AudioClip>> {
    let a = FoldAssignment::new(test_fold, validation_fold)?;
    Ok(split_by_fold(clips, &a, |c| c.fold))
}

pub fn split_by_fold<T>(items: Vec<T>, a: &FoldAssignment, fold_of: impl Fn(&T) -> u8) -> Splits<T> {
    let mut s = Splits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for item in items {
        let f = fold_of(&item);
        if f == a.test_fold {
            s.test.push(item);
        } else if f == a.validation_fold {
            s.validation.push(item);
        } else {
            s.train.push(item);
        }
    }
    s
}

/// Lists `*.wav` files directly under `dir` (or `dir/audio`), sorted by name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let audio = dir.join("audio");
    let root = if audio.is_dir() { audio } else { dir.to_path_buf() };
    let mut out: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(|e| Error::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    out.sort();
    Ok(out)
}
