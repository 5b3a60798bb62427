//! Accuracy and macro-F1 reports over full or contrastive-only splits,
//! counting of unresolved contrastive training examples, and aggregation
//! of repeated runs.
//!
//! Per-class F1 is 0 whenever precision + recall is 0, and macro-F1 always
//! averages over all three polarity classes even if a class is absent from
//! the split, so numbers stay comparable across splits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{featurize, Mode, Model};

/// Which examples of a corpus to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    All,
    /// Only examples whose sentence is contrastive.
    ContrastiveOnly,
}

impl SplitFilter {
    pub fn label(self) -> &'static str {
        match self {
            SplitFilter::All => "all",
            SplitFilter::ContrastiveOnly => "contrastive_only",
        }
    }
}

/// Precision, recall, and F1 of one polarity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    #[serde(with = "crate::floatfmt")]
    pub precision: f64,
    #[serde(with = "crate::floatfmt")]
    pub recall: f64,
    #[serde(with = "crate::floatfmt")]
    pub f1: f64,
}

/// Metrics of one evaluation: accuracy, macro-F1, per-class breakdown, and
/// the gold-by-predicted confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Caller-facing split name ("full", "contrastive", "train", ...).
    pub split: String,
    #[serde(with = "crate::floatfmt")]
    pub accuracy: f64,
    #[serde(with = "crate::floatfmt")]
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`, indexed in polarity order.
    pub confusion: [[u64; 3]; 3],
    pub n_examples: u64,
}

impl MetricReport {
    /// Derives all metrics from a gold-by-predicted confusion matrix.
    pub fn from_confusion(split: &str, confusion: [[u64; 3]; 3]) -> MetricReport {
        let n: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..3).map(|c| confusion[c][c]).sum();
        let accuracy = if n == 0 { 0.0 } else { trace as f64 / n as f64 };

        let mut per_class = Vec::with_capacity(3);
        let mut f1_sum = 0.0;
        for c in 0..3 {
            let tp = confusion[c][c] as f64;
            let predicted: f64 = (0..3).map(|g| confusion[g][c] as f64).sum();
            let gold: f64 = (0..3).map(|p| confusion[c][p] as f64).sum();
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if gold > 0.0 { tp / gold } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1_sum += f1;
            per_class.push(ClassMetrics {
                precision,
                recall,
                f1,
            });
        }

        MetricReport {
            split: split.to_string(),
            accuracy,
            macro_f1: f1_sum / 3.0,
            per_class,
            confusion,
            n_examples: n,
        }
    }
}

/// Evaluates a model with its own featurization mode.
pub fn evaluate(model: &Model, corpus: &Corpus, filter: SplitFilter) -> Result<MetricReport> {
    evaluate_with_mode(model, corpus, filter, model.mode())
}

/// Evaluates with an explicit featurization mode. Passing `AspectBlind`
/// for an aspect-aware model realizes the "remove the aspects at test
/// time" probe: the window half of the feature space simply stays empty.
pub fn evaluate_with_mode(
    model: &Model,
    corpus: &Corpus,
    filter: SplitFilter,
    mode: Mode,
) -> Result<MetricReport> {
    let mut confusion = [[0u64; 3]; 3];
    let mut seen = false;
    for ex in corpus.examples() {
        if filter == SplitFilter::ContrastiveOnly && !corpus.is_contrastive(&ex.sentence_id) {
            continue;
        }
        seen = true;
        let fv = featurize(ex, mode, model.hash_bits(), model.hash_seed());
        let predicted = model.predict(&fv);
        confusion[ex.label.index()][predicted.index()] += 1;
    }
    if !seen {
        return Err(Error::EmptySplit {
            filter: filter.label().to_string(),
        });
    }
    Ok(MetricReport::from_confusion(filter.label(), confusion))
}

/// Number of training examples from contrastive sentences that the model
/// misclassifies.
pub fn count_incorrect_contrastive(model: &Model, corpus_train: &Corpus) -> usize {
    corpus_train
        .examples()
        .iter()
        .filter(|ex| {
            corpus_train.is_contrastive(&ex.sentence_id)
                && model.predict(&model.featurize_example(ex)) != ex.label
        })
        .count()
}

/// One run's evaluation results, as fed into `aggregate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scheme: String,
    /// Serialized configuration without the seed; runs aggregated together
    /// must agree on it.
    pub fingerprint: String,
    pub seed: u64,
    /// split name -> report, e.g. "full", "contrastive", "full_no_aspect".
    pub reports: BTreeMap<String, MetricReport>,
    pub incorrect_contrastive: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    #[serde(with = "crate::floatfmt")]
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    #[serde(with = "crate::floatfmt")]
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAggregate {
    pub accuracy: MetricAggregate,
    pub macro_f1: MetricAggregate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeAggregate {
    pub scheme: String,
    pub n_runs: usize,
    pub seeds: Vec<u64>,
    pub splits: BTreeMap<String, SplitAggregate>,
    pub incorrect_contrastive: MetricAggregate,
    pub incorrect_contrastive_per_seed: Vec<u64>,
}

pub const AGGREGATE_SCHEMA: &str = "rwlab.aggregate.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema: String,
    pub schemes: Vec<SchemeAggregate>,
}

fn mean_std(values: &[f64]) -> MetricAggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stddev = if n < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    MetricAggregate { mean, stddev }
}

/// Aggregates run outcomes into per-scheme, per-split means and sample
/// standard deviations. Schemes keep their first-appearance order; mixing
/// different configurations under one scheme label is an error.
pub fn aggregate(outcomes: &[RunOutcome]) -> Result<AggregateReport> {
    if outcomes.is_empty() {
        return Err(Error::Config("no runs to aggregate".into()));
    }

    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&RunOutcome>> = BTreeMap::new();
    for outcome in outcomes {
        if !groups.contains_key(outcome.scheme.as_str()) {
            order.push(&outcome.scheme);
        }
        groups.entry(&outcome.scheme).or_default().push(outcome);
    }

    let mut schemes = Vec::new();
    for scheme in order {
        let runs = &groups[scheme];
        let fingerprint = &runs[0].fingerprint;
        let split_names: Vec<String> = runs[0].reports.keys().cloned().collect();
        for run in runs.iter() {
            if &run.fingerprint != fingerprint {
                return Err(Error::MixedConfigs(format!(
                    "scheme `{scheme}` aggregates runs with different configurations"
                )));
            }
            let names: Vec<String> = run.reports.keys().cloned().collect();
            if names != split_names {
                return Err(Error::MixedConfigs(format!(
                    "scheme `{scheme}` aggregates runs with different split sets"
                )));
            }
        }

        let mut splits = BTreeMap::new();
        for name in &split_names {
            let accuracies: Vec<f64> = runs.iter().map(|r| r.reports[name].accuracy).collect();
            let f1s: Vec<f64> = runs.iter().map(|r| r.reports[name].macro_f1).collect();
            splits.insert(
                name.clone(),
                SplitAggregate {
                    accuracy: mean_std(&accuracies),
                    macro_f1: mean_std(&f1s),
                },
            );
        }
        let counts: Vec<f64> = runs
            .iter()
            .map(|r| r.incorrect_contrastive as f64)
            .collect();
        schemes.push(SchemeAggregate {
            scheme: scheme.to_string(),
            n_runs: runs.len(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            splits,
            incorrect_contrastive: mean_std(&counts),
            incorrect_contrastive_per_seed: runs
                .iter()
                .map(|r| r.incorrect_contrastive)
                .collect(),
        });
    }
    Ok(AggregateReport {
        schema: AGGREGATE_SCHEMA.to_string(),
        schemes,
    })
}

/// Flat CSV form: `scheme,split,metric,mean,stddev` rows.
pub fn aggregate_to_csv(report: &AggregateReport) -> String {
    let mut out = String::from("scheme,split,metric,mean,stddev\n");
    for scheme in &report.schemes {
        for (split, agg) in &scheme.splits {
            for (metric, values) in [("accuracy", &agg.accuracy), ("macro_f1", &agg.macro_f1)] {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    scheme.scheme,
                    split,
                    metric,
                    crate::floatfmt::csv(values.mean),
                    crate::floatfmt::csv(values.stddev),
                ));
            }
        }
        out.push_str(&format!(
            "{},train,incorrect_contrastive,{},{}\n",
            scheme.scheme,
            crate::floatfmt::csv(scheme.incorrect_contrastive.mean),
            crate::floatfmt::csv(scheme.incorrect_contrastive.stddev),
        ));
    }
    out
}
