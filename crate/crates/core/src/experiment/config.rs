use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audio::{FoldAssignment, NUM_FOLDS, WORKING_RATE};
use crate::classifier::{ClassifierConfig, InitVariant};
use crate::error::{Error, Result};
use crate::features::{AugmentParams, FeatureParams};
use crate::mst::MstConfig;

pub const DATA_ENV: &str = "MELSEED_DATA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root holding `audio/*.wav` named `{fold}-{source}-{take}-{class}.wav`.
    /// Falls back to `$MELSEED_DATA`.
    pub dataset: Option<PathBuf>,
    /// Optional `clip_id,path,fold,class_label` CSV used instead of file names.
    pub manifest: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub working_rate: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            manifest: None,
            work_dir: PathBuf::from("melseed-work"),
            working_rate: WORKING_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variants: Vec<InitVariant>,
    pub folds: Vec<u8>,
    /// Test fold `f` validates on fold `((f - 1 + validation_shift) mod 5) + 1`.
    pub validation_shift: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variants: InitVariant::ALL.to_vec(),
            folds: (1..=NUM_FOLDS).collect(),
            validation_shift: 1,
        }
    }
}

/// Smoke-run dataset generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmokeConfig {
    pub classes: usize,
    pub clips_per_class: usize,
    pub source_rate: u32,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            clips_per_class: 10,
            source_rate: 44100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub features: FeatureParams,
    pub augment: AugmentParams,
    pub mst: MstConfig,
    pub classifier: ClassifierConfig,
    pub experiment: RunConfig,
    pub smoke: SmokeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub default: Value,
    pub value: Value,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Shrinks the experiment to a synthetic two-class dataset under the work
    /// directory, small layer widths and five epochs per stage.
    pub fn smoke(mut self) -> Self {
        self.data.dataset = Some(self.data.work_dir.join("smoke-data"));
        self.data.manifest = None;
        self.mst.arch.filters1 = 32;
        self.mst.arch.filters2 = 16;
        self.mst.batch_size = 20;
        self.mst.max_epochs = 5;
        self.mst.patience = 5;
        let p = &mut self.classifier.arch.piczak;
        p.conv_a_filters = 8;
        p.conv_b_filters = 8;
        p.hidden = 64;
        p.classes = self.smoke.classes;
        self.classifier.batch_size = 50;
        self.classifier.epochs = 5;
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.mst.seed = seed;
        self.classifier.seed = seed;
    }

    /// Dataset root from the config or `$MELSEED_DATA`.
    pub fn dataset_root(&self) -> Result<PathBuf> {
        self.data
            .dataset
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                Error::Config(format!("no dataset path: set [data] dataset or ${DATA_ENV}"))
            })
    }

    pub fn fold_assignment(&self, test_fold: u8) -> Result<FoldAssignment> {
        if !(1..=NUM_FOLDS).contains(&test_fold) {
            return Err(Error::Config(format!("fold {test_fold} outside 1..=5")));
        }
        let shift = self.experiment.validation_shift % NUM_FOLDS;
        FoldAssignment::new(test_fold, (test_fold - 1 + shift) % NUM_FOLDS + 1)
    }

    pub fn validate(&self) -> Result<()> {
        for &f in &self.experiment.folds {
            self.fold_assignment(f)?;
        }
        if self.experiment.variants.is_empty() {
            return Err(Error::Config("no variants requested".into()));
        }
        if self.mst.arch.n_mels != self.features.n_mels {
            return Err(Error::Config(format!(
                "transform emits {} bands, features have {}",
                self.mst.arch.n_mels, self.features.n_mels
            )));
        }
        if self.mst.arch.stride1 != self.features.hop {
            return Err(Error::Config(format!(
                "first transform stride {} must equal the hop {}",
                self.mst.arch.stride1, self.features.hop
            )));
        }
        let p = &self.classifier.arch.piczak;
        if (p.n_mels, p.frames) != (self.features.n_mels, self.features.segment_frames) {
            return Err(Error::Config(format!(
                "classifier input {}x{} does not match {}x{} segments",
                p.n_mels, p.frames, self.features.n_mels, self.features.segment_frames
            )));
        }
        if self.mst.batch_size == 0 || self.classifier.batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }

    /// Every leaf whose value differs from the defaults, as dotted keys.
    pub fn overrides(&self) -> Vec<Override> {
        let mut base = BTreeMap::new();
        let mut cur = BTreeMap::new();
        flatten("", &serde_json::to_value(Self::default()).expect("serialize"), &mut base);
        flatten("", &serde_json::to_value(self).expect("serialize"), &mut cur);
        cur.into_iter()
            .filter_map(|(key, value)| {
                let default = base.get(&key).cloned().unwrap_or(Value::Null);
                (default != value).then_some(Override { key, default, value })
            })
            .collect()
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_hold_published_hyperparameters() {
        let c = ExperimentConfig::default();
        assert_eq!(c.data.working_rate, 22050);
        assert_eq!((c.features.n_fft, c.features.hop, c.features.n_mels), (1024, 512, 60));
        assert_eq!(c.mst.adam.lr, 3e-4);
        assert_eq!(c.mst.batch_size, 100);
        assert_eq!((c.classifier.sgd.lr, c.classifier.sgd.momentum), (5e-3, 0.9));
        assert_eq!((c.classifier.batch_size, c.classifier.epochs), (500, 200));
        assert!(c.overrides().is_empty());
        c.validate().unwrap();
    }

    #[test]
    fn toml_sections_and_overrides() {
        let c = ExperimentConfig::from_toml_str(
            "[mst]\nmax_epochs = 7\n[experiment]\nfolds = [2]\nvariants = [\"mel-baseline\"]\n",
        )
        .unwrap();
        assert_eq!(c.mst.max_epochs, 7);
        assert_eq!(c.experiment.variants, vec![InitVariant::MelBaseline]);
        let keys: Vec<String> = c.overrides().into_iter().map(|o| o.key).collect();
        assert_eq!(keys, ["experiment.folds", "experiment.variants", "mst.max_epochs"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[mst]\nlearning_rate = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[classifier]\nvariant = \"x\"\n").is_err());
    }

    #[test]
    fn validation_fold_convention() {
        let c = ExperimentConfig::default();
        for f in 1..=5u8 {
            assert_eq!(c.fold_assignment(f).unwrap().validation_fold, f % 5 + 1);
        }
        assert!(c.fold_assignment(0).is_err());
        assert!(c.fold_assignment(6).is_err());
    }

    #[test]
    fn smoke_preset_is_valid_and_recorded() {
        let c = ExperimentConfig::default().smoke();
        c.validate().unwrap();
        assert!(c.overrides().iter().any(|o| o.key == "classifier.epochs"));
        let back = ExperimentConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
