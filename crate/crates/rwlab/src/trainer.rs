//! Weighted mini-batch training with epoch-end weight adjustment and
//! validation-based early stopping.
//!
//! Each epoch shuffles the training examples with the run's seeded
//! generator, consumes them in batches whose total loss is the weight
//! renormalized mean `L = sum(w * l) / sum(w)` (the gradient uses the same
//! normalization, so every optimizer step is the exact gradient of `L`),
//! then predicts over the full training set once and lets the scheme adjust
//! the stored weights. The checkpoint returned is the model from the epoch
//! with the best validation macro-F1; ties keep the earliest epoch.
//!
//! Runs are bit-reproducible: identical corpora, config, and seed produce
//! identical parameters, metrics, and run artifacts across processes.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Polarity};
use crate::error::{Error, Result};
use crate::eval::{self, SplitFilter};
use crate::model::{
    apply_update, featurize, forward, loss_from_probs, save_checkpoint, BatchGrad, FeatureVector,
    Mode, Model, OptimizerState,
};
use crate::weighting::{
    adjust_weights, batch_weights, init_weights, log_ratio, weighted_error_rate, SchemeConfig,
    SchemeKind, WeightState,
};

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Examples held out when a single training file is split; unused when
    /// a dedicated validation corpus is supplied.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Seeds per scheme when comparing: seed, seed+1, ...
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeConfig,
    #[serde(default = "default_hash_bits")]
    pub hash_bits: u32,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_learning_rate", with = "crate::floatfmt")]
    pub learning_rate: f64,
    #[serde(default = "default_hash_seed")]
    pub hash_seed: u64,
}

fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    12
}
fn default_validation_size() -> usize {
    150
}
fn default_patience() -> usize {
    3
}
fn default_seed() -> u64 {
    42
}
fn default_n_runs() -> usize {
    10
}
fn default_scheme() -> SchemeConfig {
    SchemeConfig::new(SchemeKind::Uniform)
}
fn default_hash_bits() -> u32 {
    18
}
fn default_mode() -> Mode {
    Mode::AspectAware
}
fn default_learning_rate() -> f64 {
    0.004
}
fn default_hash_seed() -> u64 {
    0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            validation_size: default_validation_size(),
            patience: default_patience(),
            seed: default_seed(),
            n_runs: default_n_runs(),
            scheme: default_scheme(),
            hash_bits: default_hash_bits(),
            mode: default_mode(),
            learning_rate: default_learning_rate(),
            hash_seed: default_hash_seed(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.n_runs < 1 {
            return Err(Error::Config("n_runs must be >= 1".into()));
        }
        self.scheme.validate()
    }
}

/// Metrics and weighting diagnostics of one completed epoch. Epochs are
/// numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the renormalized batch losses.
    #[serde(with = "crate::floatfmt")]
    pub train_loss: f64,
    #[serde(with = "crate::floatfmt")]
    pub val_accuracy: f64,
    #[serde(with = "crate::floatfmt")]
    pub val_macro_f1: f64,
    /// Weighted error rate over the scheme's target set; for non-adaptive
    /// schemes this is the contrastive-gated rate, logged as a diagnostic.
    /// Equals the weight-mass fraction of the flagged set before adjustment.
    #[serde(with = "crate::floatfmt")]
    pub error_rate: f64,
    /// Log correct-incorrect ratio; 0 for schemes that never adjust.
    #[serde(with = "crate::floatfmt")]
    pub alpha: f64,
    pub n_weights_adjusted: usize,
    /// Training examples from contrastive sentences misclassified at epoch
    /// end.
    pub incorrect_contrastive: usize,
    /// Weight-mass fraction of the flagged set after adjustment.
    #[serde(with = "crate::floatfmt")]
    pub flagged_fraction_after: f64,
    pub clamped: bool,
    pub rescaled: bool,
}

/// Everything produced by one training run, including the weight
/// trajectory needed for the CSV dump and the gating diagnostics.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub n_train_examples: usize,
    pub n_validation_examples: usize,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose checkpoint is returned.
    pub best_epoch: usize,
    /// Model parameters as of `best_epoch`.
    pub model: Model,
    /// Model parameters as of the last completed epoch.
    pub final_model: Model,
    /// Stored weights at end of training, with the adjustment log.
    pub weight_state: WeightState,
    /// `weight_trajectory[0]` is the initial vector; entry `k` is the state
    /// after epoch `k`'s adjustment.
    pub weight_trajectory: Vec<Vec<f64>>,
    /// Per-epoch misclassification masks from the epoch-end prediction pass.
    pub incorrect_history: Vec<Vec<bool>>,
    pub contrastive_mask: Vec<bool>,
}

/// Serialized form of a run: `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunJson {
    pub schema: String,
    pub config: TrainConfig,
    pub n_train_examples: usize,
    pub n_validation_examples: usize,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

pub const RUN_SCHEMA: &str = "rwlab.run.v1";

impl TrainRun {
    pub fn to_run_json(&self) -> RunJson {
        RunJson {
            schema: RUN_SCHEMA.to_string(),
            config: self.config.clone(),
            n_train_examples: self.n_train_examples,
            n_validation_examples: self.n_validation_examples,
            best_epoch: self.best_epoch,
            epochs: self.epochs.clone(),
        }
    }
}

/// Renormalized weighted batch loss `sum(w * l) / sum(w)`; invariant under
/// uniform scaling of the weights.
pub fn batch_total_loss(weights: &[f64], losses: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), losses.len());
    debug_assert!(!weights.is_empty());
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for i in 0..weights.len() {
        numerator += weights[i] * losses[i];
        denominator += weights[i];
    }
    numerator / denominator
}

/// Argmax predictions over a whole corpus with the model's own
/// featurization; ties resolve in the fixed polarity order.
pub fn epoch_end_predictions(model: &Model, corpus: &Corpus) -> Vec<Polarity> {
    corpus
        .examples()
        .iter()
        .map(|ex| model.predict(&model.featurize_example(ex)))
        .collect()
}

fn predictions_from_features(model: &Model, features: &[FeatureVector]) -> Vec<Polarity> {
    features.iter().map(|fv| model.predict(fv)).collect()
}

/// Trains with the scheme's own initial weights.
pub fn train(train: &Corpus, valid: &Corpus, config: &TrainConfig) -> Result<TrainRun> {
    let contrastive_mask = train.contrastive_mask();
    let initial = init_weights(train.len().max(1), &config.scheme, &contrastive_mask)?;
    train_with_initial_weights(train, valid, config, initial)
}

/// Trains from an explicit initial weight vector. The batch loss is scale
/// invariant, so scaling the initial weights by a power of two reproduces
/// the exact parameter trajectory.
pub fn train_with_initial_weights(
    train_corpus: &Corpus,
    valid_corpus: &Corpus,
    config: &TrainConfig,
    initial_weights: WeightState,
) -> Result<TrainRun> {
    config.validate()?;
    if train_corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if valid_corpus.is_empty() {
        return Err(Error::Config("validation corpus is empty".into()));
    }
    let n = train_corpus.len();
    if initial_weights.len() != n {
        return Err(Error::Config(format!(
            "initial weight vector has length {} but the corpus has {n} examples",
            initial_weights.len()
        )));
    }

    let features: Vec<FeatureVector> = train_corpus
        .examples()
        .iter()
        .map(|ex| featurize(ex, config.mode, config.hash_bits, config.hash_seed))
        .collect();
    let labels = train_corpus.labels();
    let contrastive_mask = train_corpus.contrastive_mask();
    let target_mask: Vec<bool> = match config.scheme.scheme {
        SchemeKind::ArwAll => vec![true; n],
        _ => contrastive_mask.clone(),
    };

    let mut model = Model::zeros(config.hash_bits, config.mode, config.hash_seed)?;
    let mut optimizer = OptimizerState::new(config.learning_rate, model.n_params())?;
    let mut gradient = BatchGrad::new(model.n_params());
    let mut weights = initial_weights;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..n).collect();

    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut weight_trajectory = vec![weights.weights.clone()];
    let mut incorrect_history: Vec<Vec<bool>> = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;

    let mut batch_probs: Vec<[f64; 3]> = Vec::with_capacity(config.batch_size);
    let mut batch_losses: Vec<f64> = Vec::with_capacity(config.batch_size);
    let mut batch_p_true: Vec<f64> = Vec::with_capacity(config.batch_size);
    let mut batch_stored: Vec<f64> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            batch_probs.clear();
            batch_losses.clear();
            batch_p_true.clear();
            batch_stored.clear();
            for &i in batch {
                let probs = forward(&model, &features[i]);
                batch_losses.push(loss_from_probs(&probs, labels[i]));
                batch_p_true.push(probs[labels[i].index()]);
                batch_probs.push(probs);
                batch_stored.push(weights.weights[i]);
            }

            let effective = batch_weights(&config.scheme, &batch_stored, &batch_p_true);
            let weight_sum: f64 = effective.iter().sum();

            // A focal batch where every example is classified with
            // certainty has zero total weight; its loss and gradient are
            // taken as zero and the optimizer still steps.
            let batch_loss = if weight_sum > 0.0 {
                let loss = batch_total_loss(&effective, &batch_losses);
                for (k, &i) in batch.iter().enumerate() {
                    let coefficient = effective[k] / weight_sum;
                    if coefficient != 0.0 {
                        gradient.accumulate_example(
                            &model,
                            &features[i],
                            labels[i],
                            &batch_probs[k],
                            coefficient,
                        );
                    }
                }
                loss
            } else {
                0.0
            };

            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite batch loss at epoch {epoch}, batch {batch_no}"
                )));
            }
            apply_update(&mut model, &mut optimizer, &gradient).map_err(|e| {
                Error::Numeric(format!("epoch {epoch}, batch {batch_no}: {e}"))
            })?;
            gradient.clear();
            loss_sum += batch_loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches as f64;

        let predictions = predictions_from_features(&model, &features);
        let incorrect: Vec<bool> = predictions
            .iter()
            .zip(&labels)
            .map(|(p, l)| p != l)
            .collect();
        let incorrect_contrastive = incorrect
            .iter()
            .zip(&contrastive_mask)
            .filter(|&(&i, &c)| i && c)
            .count();

        let error_rate = weighted_error_rate(&weights.weights, &incorrect, &target_mask);
        let (alpha, clamped, n_adjusted, rescaled) = if config.scheme.scheme.is_adaptive() {
            let (alpha, clamped) = log_ratio(error_rate, config.scheme.epsilon);
            adjust_weights(&mut weights, alpha, &incorrect, &target_mask)?;
            let record = weights.epoch_log.last().expect("just appended");
            (alpha, clamped, record.n_adjusted, record.rescale_factor.is_some())
        } else {
            (0.0, false, 0, false)
        };
        let flagged_fraction_after =
            weighted_error_rate(&weights.weights, &incorrect, &target_mask);

        let val_report = eval::evaluate(&model, valid_corpus, SplitFilter::All)?;
        let improved = match &best {
            None => true,
            Some((best_mf1, _, _)) => val_report.macro_f1 > *best_mf1,
        };
        if improved {
            best = Some((val_report.macro_f1, epoch, model.clone()));
        }

        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy: val_report.accuracy,
            val_macro_f1: val_report.macro_f1,
            error_rate,
            alpha,
            n_weights_adjusted: n_adjusted,
            incorrect_contrastive,
            flagged_fraction_after,
            clamped,
            rescaled,
        });
        weight_trajectory.push(weights.weights.clone());
        incorrect_history.push(incorrect);

        let best_epoch = best.as_ref().map(|&(_, e, _)| e).unwrap_or(epoch);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainRun {
        config: config.clone(),
        n_train_examples: n,
        n_validation_examples: valid_corpus.len(),
        epochs,
        best_epoch,
        model: best_model,
        final_model: model,
        weight_state: weights,
        weight_trajectory,
        incorrect_history,
        contrastive_mask,
    })
}

/// Splits one corpus into (train, validation) on sentence boundaries:
/// whole sentences are moved from the end of the lexicographic sentence_id
/// order until the validation side holds at least `validation_size`
/// examples. Aspect-free sentences stay on the training side.
pub fn split_validation(corpus: &Corpus, validation_size: usize) -> Result<(Corpus, Corpus)> {
    if validation_size < 1 {
        return Err(Error::Config("validation_size must be >= 1".into()));
    }
    if validation_size >= corpus.len() {
        return Err(Error::Config(format!(
            "validation_size {validation_size} must be smaller than the corpus ({} examples)",
            corpus.len()
        )));
    }

    let mut sorted_ids: Vec<&String> = corpus
        .sentence_ids()
        .iter()
        .filter(|sid| !corpus.sentence_examples(sid).is_empty())
        .collect();
    sorted_ids.sort();

    let mut validation_ids = std::collections::BTreeSet::new();
    let mut taken = 0usize;
    for sid in sorted_ids.iter().rev() {
        if taken >= validation_size {
            break;
        }
        taken += corpus.sentence_examples(sid).len();
        validation_ids.insert(sid.as_str().to_string());
    }

    let valid = corpus.filter_sentences(|sid| validation_ids.contains(sid));
    let train = corpus.filter_sentences(|sid| !validation_ids.contains(sid));
    if train.is_empty() {
        return Err(Error::Config(
            "validation split would leave no training examples".into(),
        ));
    }
    Ok((train, valid))
}

/// Writes the run directory: `run.json` (config and per-epoch log),
/// `model.bin` (checkpoint at the best epoch), and `weights.csv` (the
/// weight trajectory with per-epoch misclassification flags; epoch 0 rows
/// hold the initial weights).
pub fn write_run_dir(run: &TrainRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let json = serde_json::to_string_pretty(&run.to_run_json())
        .map_err(|e| Error::Config(format!("serializing run.json: {e}")))?;
    fs::write(dir.join("run.json"), json + "\n")?;

    save_checkpoint(&run.model, &dir.join("model.bin"))?;

    let mut csv = String::from("epoch,example_id,weight,incorrect,contrastive\n");
    for (epoch, snapshot) in run.weight_trajectory.iter().enumerate() {
        for (i, w) in snapshot.iter().enumerate() {
            let incorrect = if epoch == 0 {
                0
            } else {
                u8::from(run.incorrect_history[epoch - 1][i])
            };
            csv.push_str(&format!(
                "{epoch},{i},{},{incorrect},{}\n",
                crate::floatfmt::csv(*w),
                u8::from(run.contrastive_mask[i])
            ));
        }
    }
    fs::write(dir.join("weights.csv"), csv)?;
    Ok(())
}
