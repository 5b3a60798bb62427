//! Experiment configuration files: dataset source resolution plus the
//! train/compare command configs. All CLI flags override config keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rwlab::corpus::{generate_synthetic, load_corpus, Corpus, SyntheticSpec};
use rwlab::error::{Error, Result};
use rwlab::trainer::{split_validation, TrainConfig};
use rwlab::weighting::{SchemeConfig, SchemeKind};

/// Where the experiment data comes from: either a synthetic spec or JSONL
/// files. Exactly one of `synthetic` and `train_path` must be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    /// Optional dedicated validation file; otherwise `validation_size`
    /// examples are split off the training file on sentence boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

/// Corpora resolved from a `DatasetSource`.
pub struct LoadedData {
    pub train: Corpus,
    pub valid: Corpus,
    pub test_full: Option<Corpus>,
    pub test_contrastive: Option<Corpus>,
}

impl DatasetSource {
    pub fn load(&self, validation_size: usize) -> Result<LoadedData> {
        match (&self.synthetic, &self.train_path) {
            (Some(spec), None) => {
                let data = generate_synthetic(spec)?;
                Ok(LoadedData {
                    train: data.train,
                    valid: data.valid,
                    test_full: Some(data.test_full),
                    test_contrastive: Some(data.test_contrastive),
                })
            }
            (None, Some(train_path)) => {
                let full_train = load_corpus(train_path)?;
                let (train, valid) = match &self.valid_path {
                    Some(valid_path) => (full_train, load_corpus(valid_path)?),
                    None => split_validation(&full_train, validation_size)?,
                };
                let test_full = match &self.test_path {
                    Some(p) => Some(load_corpus(p)?),
                    None => None,
                };
                let test_contrastive = test_full
                    .as_ref()
                    .map(|t| t.filter_sentences(|sid| t.is_contrastive(sid)));
                Ok(LoadedData {
                    train,
                    valid,
                    test_full,
                    test_contrastive,
                })
            }
            (Some(_), Some(_)) => Err(Error::Config(
                "dataset cannot set both `synthetic` and `train_path`".into(),
            )),
            (None, None) => Err(Error::Config(
                "dataset must set either `synthetic` or `train_path`".into(),
            )),
        }
    }
}

/// Config file for `rwlab train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// The epsilon grid searched when `--sweep-epsilon` is given.
pub fn default_epsilon_sweep() -> Vec<f64> {
    vec![-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2]
}

fn default_schemes() -> Vec<SchemeConfig> {
    vec![
        SchemeConfig::new(SchemeKind::Uniform),
        SchemeConfig::new(SchemeKind::Manual),
        SchemeConfig::new(SchemeKind::Focal),
        SchemeConfig::new(SchemeKind::Arw),
        SchemeConfig::new(SchemeKind::ArwAll),
    ]
}

/// Config file for `rwlab compare`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_epsilon_sweep")]
    pub epsilon_sweep: Vec<f64>,
}

pub fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Serialized train configuration without the seed; identical strings mean
/// aggregable runs.
pub fn config_fingerprint(train: &TrainConfig, scheme: &SchemeConfig) -> String {
    let mut stripped = train.clone();
    stripped.seed = 0;
    stripped.scheme = scheme.clone();
    serde_json::to_string(&stripped).expect("config serializes")
}
