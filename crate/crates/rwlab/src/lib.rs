//! rwlab: a laboratory for example re-weighting schemes in aspect-level
//! sentiment classification.
//!
//! The crate trains a deterministic feature-hashing softmax classifier on
//! (sentence, aspect) pairs and compares several ways of weighting the
//! per-example losses: uniform, manual contrastive re-weighting, focal loss,
//! and an adaptive scheme that multiplies the weights of misclassified
//! examples by `exp(alpha)` at every epoch boundary, where
//! `alpha = ln((1 - r + eps) / (r - eps))` and `r` is the weighted error
//! rate over the targeted examples.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`corpus`]: data model, JSONL ingestion, contrastive-sentence
//!   detection, statistics, and a synthetic corpus generator.
//! - [`model`]: featurization, softmax forward/backward, and the
//!   adaptive-moment optimizer.
//! - [`weighting`]: the per-example weight schemes and their epoch-end
//!   update rules.
//! - [`trainer`]: the weighted mini-batch training loop with validation
//!   based early stopping and reproducible run artifacts.
//! - [`eval`]: accuracy / macro-F1 reports, contrastive error counting,
//!   and multi-seed aggregation.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod floatfmt;
pub mod model;
pub mod trainer;
pub mod weighting;

pub use corpus::{AspectExample, Corpus, CorpusStats, Polarity};
pub use error::{Error, Result};
pub use model::{FeatureVector, Mode, Model, OptimizerState};
pub use trainer::{TrainConfig, TrainRun};
pub use weighting::{SchemeConfig, SchemeKind, WeightState};
