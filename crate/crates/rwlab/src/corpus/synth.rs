//! Synthetic corpus generator with known aspect-level ground truth.
//!
//! Sentences are assembled from templates over disjoint polarity lexicons
//! (`pos*`, `neg*`, `neu*` tokens), synthetic aspect terms (`item*`), and a
//! shared pool of polarity-neutral filler words. Every aspect's label is
//! determined by the polarity-lexicon words that fall inside a +/-3 token
//! window around its span, and the generator verifies this property for
//! every sentence it emits. Consequences:
//!
//! - an aspect-aware classifier can reach 100% accuracy (the window word
//!   identifies the label), and
//! - any predictor that reads only the sentence text scores at most one of
//!   the two aspects of a contrastive sentence, a 50% ceiling on the
//!   positive/negative contrastive subset.
//!
//! Non-contrastive sentences additionally carry sentence-level opinion
//! words placed outside every aspect window, and contrastive sentences
//! amplify one clause the same way, so the sentence-level signal dominates
//! early training the way majority examples dominate real review data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AspectExample, Corpus, Polarity};
use crate::error::{Error, Result};
use crate::model::window_positions;

/// Parameters of the synthetic corpus. `n_sentences` is the size of the
/// training split; the validation and test splits are sized at 1/10 and
/// 3/10 of it (rounded up) and drawn from the same distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_n_sentences")]
    pub n_sentences: usize,
    #[serde(default = "default_contrastive_rate", with = "crate::floatfmt")]
    pub contrastive_rate: f64,
    #[serde(default = "default_lexicon_size")]
    pub n_positive_words: usize,
    #[serde(default = "default_lexicon_size")]
    pub n_negative_words: usize,
    #[serde(default = "default_lexicon_size")]
    pub n_neutral_words: usize,
    #[serde(default = "default_n_aspect_terms")]
    pub n_aspect_terms: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_n_sentences() -> usize {
    1000
}
fn default_contrastive_rate() -> f64 {
    0.12
}
fn default_lexicon_size() -> usize {
    30
}
fn default_n_aspect_terms() -> usize {
    40
}
fn default_seed() -> u64 {
    7
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_sentences: default_n_sentences(),
            contrastive_rate: default_contrastive_rate(),
            n_positive_words: default_lexicon_size(),
            n_negative_words: default_lexicon_size(),
            n_neutral_words: default_lexicon_size(),
            n_aspect_terms: default_n_aspect_terms(),
            seed: default_seed(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sentences < 1 {
            return Err(Error::Config("n_sentences must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.contrastive_rate) {
            return Err(Error::Config(format!(
                "contrastive_rate {} must lie in [0, 1]; a rate above 1 would \
                 require more contrastive sentences than sentences",
                self.contrastive_rate
            )));
        }
        for (name, n) in [
            ("n_positive_words", self.n_positive_words),
            ("n_negative_words", self.n_negative_words),
            ("n_neutral_words", self.n_neutral_words),
            ("n_aspect_terms", self.n_aspect_terms),
        ] {
            if n < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// The four generated splits. `test_contrastive` holds exactly the
/// contrastive sentences of `test_full`, re-indexed as a corpus of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Corpus,
    pub valid: Corpus,
    pub test_full: Corpus,
    pub test_contrastive: Corpus,
}

// Non-contrastive sentence polarity prior (positive, negative, neutral) and
// contrastive pair mix; skewed the way review corpora are.
const POLARITY_PRIOR: [f64; 3] = [0.55, 0.27, 0.18];
const PAIR_POS_NEG: f64 = 0.5;
const PAIR_POS_NEU: f64 = 0.25;
// remainder: negative/neutral

const P_SECOND_ASPECT: f64 = 0.5;
const P_EXTRA_OPINION: f64 = 1.0;
const P_SECOND_EXTRA: f64 = 0.5;
const P_CONTRA_AMPLIFIER: f64 = 1.0;

const DETERMINERS: [&str; 5] = ["the", "a", "my", "this", "its"];
const VERBS: [&str; 5] = ["is", "was", "looks", "feels", "seems"];
const ADVERBS: [&str; 5] = ["really", "very", "quite", "so", "rather"];
const TAILS: [&str; 4] = ["overall", "honestly", "frankly", "basically"];
const CONNECTIVES: [&str; 3] = ["but", "yet", "though"];
const PADS: [&str; 3] = ["still", "somehow", "indeed"];
// polarity-free context words; they carry no label signal but add the
// early-training noise that ordinary vocabulary contributes in real text
const FILLERS: [&str; 36] = [
    "i", "we", "it", "that", "one", "with", "for", "from", "have", "had",
    "just", "some", "other", "more", "than", "when", "while", "also", "too",
    "then", "there", "here", "about", "into", "over", "after", "before",
    "again", "once", "only", "own", "same", "such", "both", "each", "most",
];

struct Lexicons {
    words: [Vec<String>; 3],
    polarity_of: BTreeMap<String, Polarity>,
    aspects: Vec<String>,
}

impl Lexicons {
    fn new(spec: &SyntheticSpec) -> Lexicons {
        let sizes = [
            spec.n_positive_words,
            spec.n_negative_words,
            spec.n_neutral_words,
        ];
        let prefixes = ["pos", "neg", "neu"];
        let mut words: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut polarity_of = BTreeMap::new();
        for (k, prefix) in prefixes.iter().enumerate() {
            for i in 0..sizes[k] {
                let w = format!("{prefix}{i:02}");
                polarity_of.insert(w.clone(), Polarity::from_index(k));
                words[k].push(w);
            }
        }
        let aspects = (0..spec.n_aspect_terms)
            .map(|i| format!("item{i:02}"))
            .collect();
        Lexicons {
            words,
            polarity_of,
            aspects,
        }
    }

    fn sample_word(&self, rng: &mut ChaCha8Rng, polarity: Polarity) -> String {
        let pool = &self.words[polarity.index()];
        pool[rng.gen_range(0..pool.len())].clone()
    }

    fn sample_aspect(&self, rng: &mut ChaCha8Rng) -> String {
        self.aspects[rng.gen_range(0..self.aspects.len())].clone()
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn sample_polarity(rng: &mut ChaCha8Rng) -> Polarity {
    let roll: f64 = rng.gen();
    if roll < POLARITY_PRIOR[0] {
        Polarity::Positive
    } else if roll < POLARITY_PRIOR[0] + POLARITY_PRIOR[1] {
        Polarity::Negative
    } else {
        Polarity::Neutral
    }
}

fn sample_contrastive_pair(rng: &mut ChaCha8Rng) -> (Polarity, Polarity) {
    let roll: f64 = rng.gen();
    let (a, b) = if roll < PAIR_POS_NEG {
        (Polarity::Positive, Polarity::Negative)
    } else if roll < PAIR_POS_NEG + PAIR_POS_NEU {
        (Polarity::Positive, Polarity::Neutral)
    } else {
        (Polarity::Negative, Polarity::Neutral)
    };
    if rng.gen_bool(0.5) {
        (b, a)
    } else {
        (a, b)
    }
}

/// One aspect clause: tokens plus the span of the aspect term within them.
/// Both polarity words always land inside the +/-3 window of the span.
struct Clause {
    tokens: Vec<String>,
    span: (usize, usize),
}

fn build_clause(rng: &mut ChaCha8Rng, lex: &Lexicons, aspect: &str, polarity: Polarity) -> Clause {
    let w1 = lex.sample_word(rng, polarity);
    let w2 = lex.sample_word(rng, polarity);
    let det = pick(rng, &DETERMINERS).to_string();
    let verb = pick(rng, &VERBS).to_string();
    let adv = pick(rng, &ADVERBS).to_string();
    let a = aspect.to_string();
    // every clause carries two window words so the aspect-level signal is
    // redundant: "a great screen is lovely"
    let (core, span) = match rng.gen_range(0..4u32) {
        // offsets -1 and +2
        0 => (vec![det, w1, a, verb, w2], (2usize, 3usize)),
        // -1 and +1
        1 => (vec![det, w1, a, w2], (2, 3)),
        // +2 and +3
        2 => (vec![det, a, verb, w1, w2], (1, 2)),
        // -2 and +2
        _ => (vec![w1, adv, a, verb, w2], (2, 3)),
    };

    // surround the core pattern with polarity-free context; fillers may
    // fall inside the aspect window, lexicon words may not
    let mut tokens: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(0..3u32) {
        tokens.push(pick(rng, &FILLERS).to_string());
    }
    let offset = tokens.len();
    tokens.extend(core);
    for _ in 0..rng.gen_range(0..3u32) {
        tokens.push(pick(rng, &FILLERS).to_string());
    }
    Clause {
        tokens,
        span: (span.0 + offset, span.1 + offset),
    }
}

struct SentenceDraft {
    tokens: Vec<String>,
    /// (span, label) per aspect, in clause order.
    aspects: Vec<((usize, usize), Polarity)>,
}

/// True iff every aspect window contains at least one polarity word and
/// all polarity words inside it agree with the aspect's label.
fn windows_pure(draft: &SentenceDraft, lex: &Lexicons) -> bool {
    for &(span, label) in &draft.aspects {
        let mut hits = 0usize;
        for (_, pos) in window_positions(span, draft.tokens.len()) {
            if let Some(&p) = lex.polarity_of.get(&draft.tokens[pos]) {
                if p != label {
                    return false;
                }
                hits += 1;
            }
        }
        if hits == 0 {
            return false;
        }
    }
    true
}

/// Appends `[tail-word, opinion-word]` to the sentence, padding first so the
/// opinion word stays outside every aspect window.
fn append_extra_opinion(
    rng: &mut ChaCha8Rng,
    lex: &Lexicons,
    tokens: &mut Vec<String>,
    spans: &[(usize, usize)],
    polarity: Polarity,
) {
    let max_end = spans.iter().map(|&(_, e)| e).max().unwrap_or(0);
    // the opinion word will sit at position tokens.len() + 1
    while tokens.len() + 1 < max_end + 3 {
        tokens.push(pick(rng, &PADS).to_string());
    }
    tokens.push(pick(rng, &TAILS).to_string());
    tokens.push(lex.sample_word(rng, polarity));
}

fn build_non_contrastive(rng: &mut ChaCha8Rng, lex: &Lexicons) -> SentenceDraft {
    let polarity = sample_polarity(rng);
    let two_aspects = lex.aspects.len() >= 2 && rng.gen_bool(P_SECOND_ASPECT);

    let first_aspect = lex.sample_aspect(rng);
    let first = build_clause(rng, lex, &first_aspect, polarity);
    let mut tokens = first.tokens;
    let mut aspects = vec![(first.span, polarity)];

    if two_aspects {
        let mut second_aspect = lex.sample_aspect(rng);
        while second_aspect == first_aspect {
            second_aspect = lex.sample_aspect(rng);
        }
        let second = build_clause(rng, lex, &second_aspect, polarity);
        tokens.push("and".to_string());
        let offset = tokens.len();
        tokens.extend(second.tokens);
        aspects.push(((second.span.0 + offset, second.span.1 + offset), polarity));
    }

    if rng.gen_bool(P_EXTRA_OPINION) {
        let spans: Vec<_> = aspects.iter().map(|&(s, _)| s).collect();
        append_extra_opinion(rng, lex, &mut tokens, &spans, polarity);
        if rng.gen_bool(P_SECOND_EXTRA) {
            tokens.push(pick(rng, &ADVERBS).to_string());
            tokens.push(lex.sample_word(rng, polarity));
        }
    }

    SentenceDraft { tokens, aspects }
}

fn build_contrastive(rng: &mut ChaCha8Rng, lex: &Lexicons) -> SentenceDraft {
    let (first_polarity, second_polarity) = sample_contrastive_pair(rng);

    let first_aspect = lex.sample_aspect(rng);
    let mut second_aspect = lex.sample_aspect(rng);
    while second_aspect == first_aspect {
        second_aspect = lex.sample_aspect(rng);
    }

    let first = build_clause(rng, lex, &first_aspect, first_polarity);
    let second = build_clause(rng, lex, &second_aspect, second_polarity);
    let connective = pick(rng, &CONNECTIVES).to_string();

    let mut head = first.tokens;
    // Amplify the first clause with one or two extra sentence-level opinion
    // words, the lopsided evidence that makes the other clause's aspect a
    // rare pattern; two words make a markedly harder example.
    if rng.gen_bool(P_CONTRA_AMPLIFIER) {
        head.push(pick(rng, &ADVERBS).to_string());
        head.push(lex.sample_word(rng, first_polarity));
        if rng.gen_bool(0.5) {
            head.push(pick(rng, &ADVERBS).to_string());
            head.push(lex.sample_word(rng, first_polarity));
        }
    }

    // Pad between the clauses until no polarity word leaks into the other
    // clause's aspect window.
    for pad_count in 0.. {
        let mut tokens = head.clone();
        for _ in 0..pad_count {
            tokens.push(pick(rng, &PADS).to_string());
        }
        tokens.push(connective.clone());
        let offset = tokens.len();
        tokens.extend(second.tokens.iter().cloned());
        let draft = SentenceDraft {
            tokens,
            aspects: vec![
                (first.span, first_polarity),
                (
                    (second.span.0 + offset, second.span.1 + offset),
                    second_polarity,
                ),
            ],
        };
        if windows_pure(&draft, lex) {
            return draft;
        }
        assert!(pad_count < 8, "contrastive template failed to separate");
    }
    unreachable!()
}

fn generate_split(
    spec: &SyntheticSpec,
    lex: &Lexicons,
    split: &str,
    count: usize,
    seed: u64,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_contrastive = ((spec.contrastive_rate * count as f64).round() as usize).min(count);

    let mut contrastive_slots = vec![true; n_contrastive];
    contrastive_slots.extend(std::iter::repeat_n(false, count - n_contrastive));
    contrastive_slots.shuffle(&mut rng);

    let mut examples = Vec::new();
    for (i, &contrastive) in contrastive_slots.iter().enumerate() {
        let draft = if contrastive {
            build_contrastive(&mut rng, lex)
        } else {
            build_non_contrastive(&mut rng, lex)
        };
        assert!(
            windows_pure(&draft, lex),
            "generated sentence violates the window ground-truth property"
        );
        let sentence_id = format!("{split}-{i:05}");
        for &(span, label) in &draft.aspects {
            examples.push(AspectExample {
                example_id: examples.len(),
                sentence_id: sentence_id.clone(),
                text: draft.tokens.clone(),
                aspect_term: draft.tokens[span.0..span.1].to_vec(),
                aspect_span: span,
                label,
            });
        }
    }
    Corpus::from_parts(examples, Vec::new())
}

/// Generates the four splits deterministically from the spec. Calling this
/// twice with the same spec yields identical corpora.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let lex = Lexicons::new(spec);

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_seed = master.next_u64();
    let valid_seed = master.next_u64();
    let test_seed = master.next_u64();

    let train = generate_split(spec, &lex, "train", spec.n_sentences, train_seed);
    let valid = generate_split(spec, &lex, "valid", spec.n_sentences.div_ceil(10), valid_seed);
    let test_full = generate_split(
        spec,
        &lex,
        "test",
        (3 * spec.n_sentences).div_ceil(10),
        test_seed,
    );
    let test_contrastive = test_full.filter_sentences(|sid| test_full.is_contrastive(sid));

    Ok(SyntheticData {
        train,
        valid,
        test_full,
        test_contrastive,
    })
}
