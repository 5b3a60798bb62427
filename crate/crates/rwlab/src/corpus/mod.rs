//! Aspect-sentiment data model: labeled (sentence, aspect) examples grouped
//! into sentences, contrastive-sentence detection, JSONL ingestion, dataset
//! statistics, and sentence-level split utilities.
//!
//! A sentence is *contrastive* when its aspects carry at least two distinct
//! polarity labels. Contrastiveness is computed from gold labels at load
//! time and is used only for training-time weighting and evaluation
//! splitting, never as a model input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod synth;

pub use synth::{generate_synthetic, SyntheticData, SyntheticSpec};

/// Sentiment polarity of one aspect. The declaration order fixes the total
/// ordering used for deterministic iteration and argmax tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Polarity {
        Polarity::ALL[index]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (sentence, aspect, polarity) instance; the unit that carries a
/// training weight.
///
/// `aspect_span` is a half-open token range `[start, end)` into `text`, and
/// `text[start..end]` equals `aspect_term` token for token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectExample {
    pub example_id: usize,
    pub sentence_id: String,
    pub text: Vec<String>,
    pub aspect_term: Vec<String>,
    pub aspect_span: (usize, usize),
    pub label: Polarity,
}

/// A sentence that appears in a dataset without any aspect record. It
/// contributes to sentence counts but carries no trainable example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectFreeSentence {
    pub sentence_id: String,
    pub text: Vec<String>,
}

/// One line of the JSONL dataset format. Aspect-free sentences use an empty
/// `aspect_term`, a null `aspect_span`, and a null `label`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonRecord {
    sentence_id: String,
    text: Vec<String>,
    aspect_term: Vec<String>,
    aspect_span: Option<(usize, usize)>,
    label: Option<Polarity>,
}

/// A collection of aspect examples grouped by sentence, with contrastive
/// flags computed from the gold labels. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    examples: Vec<AspectExample>,
    aspect_free: Vec<AspectFreeSentence>,
    /// Distinct sentence ids in first-seen order, including aspect-free ones.
    sentence_ids: Vec<String>,
    /// sentence_id -> example ids, aspect-bearing sentences only.
    sentence_examples: BTreeMap<String, Vec<usize>>,
    /// sentence_id -> contrastive flag, for every sentence.
    contrastive: BTreeMap<String, bool>,
}

impl Corpus {
    /// Builds a corpus from examples and aspect-free sentences, reassigning
    /// `example_id`s to `0..n` in the given order and recomputing the
    /// sentence index and contrastive flags.
    pub fn from_parts(
        examples: Vec<AspectExample>,
        aspect_free: Vec<AspectFreeSentence>,
    ) -> Corpus {
        let mut examples = examples;
        for (i, ex) in examples.iter_mut().enumerate() {
            ex.example_id = i;
        }

        let mut sentence_ids = Vec::new();
        let mut seen = BTreeSet::new();
        let mut sentence_examples: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for ex in &examples {
            if seen.insert(ex.sentence_id.clone()) {
                sentence_ids.push(ex.sentence_id.clone());
            }
            sentence_examples
                .entry(ex.sentence_id.clone())
                .or_default()
                .push(ex.example_id);
        }
        for s in &aspect_free {
            if seen.insert(s.sentence_id.clone()) {
                sentence_ids.push(s.sentence_id.clone());
            }
        }

        let mut corpus = Corpus {
            examples,
            aspect_free,
            sentence_ids,
            sentence_examples,
            contrastive: BTreeMap::new(),
        };
        corpus.contrastive = detect_contrastive(&corpus);
        corpus
    }

    pub fn examples(&self) -> &[AspectExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn aspect_free(&self) -> &[AspectFreeSentence] {
        &self.aspect_free
    }

    /// All distinct sentence ids in first-seen order.
    pub fn sentence_ids(&self) -> &[String] {
        &self.sentence_ids
    }

    pub fn n_sentences(&self) -> usize {
        self.sentence_ids.len()
    }

    pub fn n_sentences_with_aspect(&self) -> usize {
        self.sentence_examples.len()
    }

    /// Example ids of one sentence, in file order.
    pub fn sentence_examples(&self, sentence_id: &str) -> &[usize] {
        self.sentence_examples
            .get(sentence_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contrastive_flags(&self) -> &BTreeMap<String, bool> {
        &self.contrastive
    }

    pub fn is_contrastive(&self, sentence_id: &str) -> bool {
        self.contrastive.get(sentence_id).copied().unwrap_or(false)
    }

    /// Per-example contrastive mask, aligned with `examples()`.
    pub fn contrastive_mask(&self) -> Vec<bool> {
        self.examples
            .iter()
            .map(|ex| self.is_contrastive(&ex.sentence_id))
            .collect()
    }

    pub fn labels(&self) -> Vec<Polarity> {
        self.examples.iter().map(|ex| ex.label).collect()
    }

    /// New corpus with only the sentences accepted by the predicate.
    /// Example ids are reassigned.
    pub fn filter_sentences<F: Fn(&str) -> bool>(&self, keep: F) -> Corpus {
        let examples = self
            .examples
            .iter()
            .filter(|ex| keep(&ex.sentence_id))
            .cloned()
            .collect();
        let aspect_free = self
            .aspect_free
            .iter()
            .filter(|s| keep(&s.sentence_id))
            .cloned()
            .collect();
        Corpus::from_parts(examples, aspect_free)
    }

    /// New corpus with only the first `n` examples (aspect-free sentences
    /// are dropped). Contrastive flags are recomputed over the remainder.
    pub fn truncate_examples(&self, n: usize) -> Corpus {
        let examples = self.examples.iter().take(n).cloned().collect();
        Corpus::from_parts(examples, Vec::new())
    }
}

/// Recomputes the contrastive flag of every sentence: true iff the label
/// set over the sentence's examples has at least two distinct values.
pub fn detect_contrastive(corpus: &Corpus) -> BTreeMap<String, bool> {
    let mut flags = BTreeMap::new();
    for sid in &corpus.sentence_ids {
        let labels: BTreeSet<Polarity> = corpus
            .sentence_examples(sid)
            .iter()
            .map(|&i| corpus.examples[i].label)
            .collect();
        flags.insert(sid.clone(), labels.len() >= 2);
    }
    flags
}

/// Counts reported for one corpus. `pct_contrastive` uses the number of
/// aspect-bearing sentences as the denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: u64,
    pub n_aspects: u64,
    pub n_positive: u64,
    pub n_negative: u64,
    pub n_neutral: u64,
    pub n_sentences_with_aspect: u64,
    pub n_contrastive_sentences: u64,
    #[serde(with = "crate::floatfmt")]
    pub pct_contrastive: f64,
    /// Set when the corpus has no aspect-bearing sentence, in which case
    /// `pct_contrastive` is reported as 0.
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_aspect_sentences: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Computes the dataset statistics of a corpus.
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut by_class = [0u64; 3];
    for ex in corpus.examples() {
        by_class[ex.label.index()] += 1;
    }
    let n_with_aspect = corpus.n_sentences_with_aspect() as u64;
    let n_contrastive = corpus.contrastive.values().filter(|&&c| c).count() as u64;
    let no_aspect_sentences = n_with_aspect == 0;
    let pct_contrastive = if no_aspect_sentences {
        0.0
    } else {
        100.0 * n_contrastive as f64 / n_with_aspect as f64
    };
    CorpusStats {
        n_sentences: corpus.n_sentences() as u64,
        n_aspects: corpus.len() as u64,
        n_positive: by_class[0],
        n_negative: by_class[1],
        n_neutral: by_class[2],
        n_sentences_with_aspect: n_with_aspect,
        n_contrastive_sentences: n_contrastive,
        pct_contrastive,
        no_aspect_sentences,
    }
}

fn lowercase_tokens(tokens: &mut [String]) {
    for t in tokens.iter_mut() {
        if t.chars().any(|c| c.is_uppercase()) {
            *t = t.to_lowercase();
        }
    }
}

/// Loads a JSONL corpus. Tokens are lowercased; `example_id`s are assigned
/// `0..n` in file order. Malformed lines and invalid spans are reported
/// with their line number.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut examples = Vec::new();
    let mut aspect_free = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: JsonRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        lowercase_tokens(&mut record.text);
        lowercase_tokens(&mut record.aspect_term);

        if record.aspect_term.is_empty() {
            if record.aspect_span.is_some() || record.label.is_some() {
                return Err(Error::InvalidExample {
                    line: line_no,
                    sentence_id: record.sentence_id,
                    message: "aspect-free record must have null aspect_span and label".into(),
                });
            }
            aspect_free.push(AspectFreeSentence {
                sentence_id: record.sentence_id,
                text: record.text,
            });
            continue;
        }

        let span = record.aspect_span.ok_or_else(|| Error::InvalidExample {
            line: line_no,
            sentence_id: record.sentence_id.clone(),
            message: "aspect record is missing aspect_span".into(),
        })?;
        let label = record.label.ok_or_else(|| Error::InvalidExample {
            line: line_no,
            sentence_id: record.sentence_id.clone(),
            message: "aspect record is missing label".into(),
        })?;

        let (start, end) = span;
        if start >= end || end > record.text.len() {
            return Err(Error::InvalidExample {
                line: line_no,
                sentence_id: record.sentence_id,
                message: format!(
                    "aspect_span [{start}, {end}) out of bounds for {} tokens",
                    record.text.len()
                ),
            });
        }
        if record.text[start..end] != record.aspect_term[..] {
            return Err(Error::InvalidExample {
                line: line_no,
                sentence_id: record.sentence_id,
                message: format!(
                    "aspect_term {:?} does not match text[{start}..{end}) = {:?}",
                    record.aspect_term,
                    &record.text[start..end]
                ),
            });
        }

        examples.push(AspectExample {
            example_id: examples.len(),
            sentence_id: record.sentence_id,
            text: record.text,
            aspect_term: record.aspect_term,
            aspect_span: span,
            label,
        });
    }

    Ok(Corpus::from_parts(examples, aspect_free))
}

/// Writes a corpus in the JSONL dataset format: examples in id order, then
/// aspect-free sentences. Deterministic for a given corpus.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    for ex in corpus.examples() {
        let record = JsonRecord {
            sentence_id: ex.sentence_id.clone(),
            text: ex.text.clone(),
            aspect_term: ex.aspect_term.clone(),
            aspect_span: Some(ex.aspect_span),
            label: Some(ex.label),
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    for s in corpus.aspect_free() {
        let record = JsonRecord {
            sentence_id: s.sentence_id.clone(),
            text: s.text.clone(),
            aspect_term: Vec::new(),
            aspect_span: None,
            label: None,
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
