//! Feature-hashing softmax classifier over (sentence, aspect) pairs, with
//! exact per-example cross-entropy gradients and an adaptive-moment
//! optimizer.
//!
//! Features are hashed into `D = 2^hash_bits` dimensions split into two
//! halves: sentence-global unigrams and bigrams in `[0, D/2)`, and
//! aspect-window unigrams (tokens within +/-3 of the aspect span, tagged by
//! signed distance) in `[D/2, D)`. Aspect-blind featurization drops the
//! window half entirely, which makes every aspect of a sentence look
//! identical to the classifier.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AspectExample, Polarity};
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 3;

/// Radius of the aspect window in tokens.
pub const WINDOW_RADIUS: isize = 3;

/// Floor applied to the gold-label probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-30;

const CHECKPOINT_MAGIC: &[u8; 6] = b"RWLAB1";

/// Featurization mode: `AspectBlind` ignores the aspect span entirely,
/// degrading the task to sentence-level classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AspectAware,
    AspectBlind,
}

impl Mode {
    fn to_byte(self) -> u8 {
        match self {
            Mode::AspectAware => 0,
            Mode::AspectBlind => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Mode> {
        match b {
            0 => Some(Mode::AspectAware),
            1 => Some(Mode::AspectBlind),
            _ => None,
        }
    }
}

/// Positions inside the +/-WINDOW_RADIUS token window around a span,
/// excluding the span itself, as (signed distance bucket, token position).
pub fn window_positions(
    span: (usize, usize),
    len: usize,
) -> impl Iterator<Item = (isize, usize)> {
    let (start, end) = span;
    let left = (-WINDOW_RADIUS..0).filter_map(move |d| {
        let pos = start as isize + d;
        (pos >= 0).then_some((d, pos as usize))
    });
    let right = (1..=WINDOW_RADIUS).filter_map(move |d| {
        let pos = end as isize - 1 + d;
        (pos < len as isize).then_some((d, pos as usize))
    });
    left.chain(right)
}

// FNV-1a, seeded; stable across platforms and Rust versions.
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for part in parts {
        for &b in *part {
            h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    h
}

/// Sparse feature vector: sorted (index, value) pairs with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Test helper: builds a vector from raw entries.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> FeatureVector {
        entries.sort_unstable_by_key(|&(i, _)| i);
        FeatureVector { entries }
    }
}

/// Hashes one example into count features. Deterministic in all arguments.
pub fn featurize(
    example: &AspectExample,
    mode: Mode,
    hash_bits: u32,
    hash_seed: u64,
) -> FeatureVector {
    let half = 1u64 << (hash_bits - 1);
    let mut counts: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();

    for token in &example.text {
        let idx = (fnv1a(hash_seed, &[b"u", token.as_bytes()]) % half) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    }
    for pair in example.text.windows(2) {
        let idx =
            (fnv1a(hash_seed, &[b"b", pair[0].as_bytes(), pair[1].as_bytes()]) % half) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    }

    if mode == Mode::AspectAware {
        for (bucket, pos) in window_positions(example.aspect_span, example.text.len()) {
            let tag = [(bucket + 8) as u8];
            let token = example.text[pos].as_bytes();
            let idx = half as u32 + (fnv1a(hash_seed, &[b"w", &tag, token]) % half) as u32;
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }

    FeatureVector {
        entries: counts.into_iter().collect(),
    }
}

/// Linear softmax classifier: a 3 x D weight matrix plus a 3-vector bias,
/// stored flat as `[class0 row, class1 row, class2 row, bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    hash_bits: u32,
    mode: Mode,
    hash_seed: u64,
    params: Vec<f64>,
}

impl Model {
    pub fn zeros(hash_bits: u32, mode: Mode, hash_seed: u64) -> Result<Model> {
        if !(2..=30).contains(&hash_bits) {
            return Err(Error::Config(format!(
                "hash_bits {hash_bits} must lie in [2, 30]"
            )));
        }
        let dim = 1usize << hash_bits;
        Ok(Model {
            hash_bits,
            mode,
            hash_seed,
            params: vec![0.0; N_CLASSES * dim + N_CLASSES],
        })
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Number of hashed feature dimensions D.
    pub fn dim(&self) -> usize {
        1 << self.hash_bits
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, class: usize, feature: u32) -> f64 {
        self.params[class * self.dim() + feature as usize]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.params[N_CLASSES * self.dim() + class]
    }

    fn bias_base(&self) -> usize {
        N_CLASSES * self.dim()
    }

    /// Featurizes an example with this model's hashing configuration.
    pub fn featurize_example(&self, example: &AspectExample) -> FeatureVector {
        featurize(example, self.mode, self.hash_bits, self.hash_seed)
    }

    pub fn logits(&self, fv: &FeatureVector) -> [f64; N_CLASSES] {
        let dim = self.dim();
        let mut out = [0.0; N_CLASSES];
        for (c, logit) in out.iter_mut().enumerate() {
            let row = c * dim;
            let mut acc = 0.0;
            for &(idx, value) in fv.entries() {
                acc += self.params[row + idx as usize] * value;
            }
            *logit = acc + self.params[self.bias_base() + c];
        }
        out
    }

    /// Argmax prediction; ties resolve to the first polarity in the fixed
    /// ordering.
    pub fn predict(&self, fv: &FeatureVector) -> Polarity {
        let logits = self.logits(fv);
        let mut best = 0;
        for c in 1..N_CLASSES {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        Polarity::from_index(best)
    }
}

/// Softmax probabilities, computed with max-subtraction. Components are
/// positive and sum to 1 within 1e-12.
pub fn forward(model: &Model, fv: &FeatureVector) -> [f64; N_CLASSES] {
    let logits = model.logits(fv);
    softmax(logits)
}

pub(crate) fn softmax(logits: [f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for c in 0..N_CLASSES {
        exps[c] = (logits[c] - max).exp();
        sum += exps[c];
    }
    for e in exps.iter_mut() {
        *e /= sum;
    }
    exps
}

/// Cross-entropy loss of one example given its probabilities.
pub fn loss_from_probs(probs: &[f64; N_CLASSES], label: Polarity) -> f64 {
    -probs[label.index()].max(PROB_FLOOR).ln()
}

/// Exact gradient of one example's cross-entropy loss with respect to the
/// weight matrix (sparse, feature-major) and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGrad {
    /// (parameter index into the flat layout, value) for weight entries.
    pub theta: Vec<(u32, f64)>,
    pub bias: [f64; N_CLASSES],
}

/// Loss `-ln p[label]` and its exact analytic gradient.
pub fn example_loss_and_grad(
    model: &Model,
    fv: &FeatureVector,
    label: Polarity,
) -> (f64, ExampleGrad) {
    let probs = forward(model, fv);
    let loss = loss_from_probs(&probs, label);
    let mut residual = probs;
    residual[label.index()] -= 1.0;

    let dim = model.dim();
    let mut theta = Vec::with_capacity(fv.len() * N_CLASSES);
    for &(idx, value) in fv.entries() {
        for (c, r) in residual.iter().enumerate() {
            theta.push(((c * dim + idx as usize) as u32, r * value));
        }
    }
    (loss, ExampleGrad { theta, bias: residual })
}

/// Dense gradient accumulator reused across batches. Only the entries
/// touched since the last `clear` are tracked and re-zeroed.
#[derive(Debug)]
pub struct BatchGrad {
    dense: Vec<f64>,
    active: Vec<u32>,
    marked: Vec<bool>,
}

impl BatchGrad {
    pub fn new(n_params: usize) -> BatchGrad {
        BatchGrad {
            dense: vec![0.0; n_params],
            active: Vec::new(),
            marked: vec![false; n_params],
        }
    }

    pub fn clear(&mut self) {
        for &idx in &self.active {
            self.dense[idx as usize] = 0.0;
            self.marked[idx as usize] = false;
        }
        self.active.clear();
    }

    pub fn add(&mut self, idx: usize, value: f64) {
        if !self.marked[idx] {
            self.marked[idx] = true;
            self.active.push(idx as u32);
        }
        self.dense[idx] += value;
    }

    /// Accumulates `coeff` times the example gradient implied by `probs`.
    pub fn accumulate_example(
        &mut self,
        model: &Model,
        fv: &FeatureVector,
        label: Polarity,
        probs: &[f64; N_CLASSES],
        coeff: f64,
    ) {
        let mut residual = *probs;
        residual[label.index()] -= 1.0;
        let dim = model.dim();
        for &(idx, value) in fv.entries() {
            for (c, r) in residual.iter().enumerate() {
                self.add(c * dim + idx as usize, coeff * r * value);
            }
        }
        let bias_base = N_CLASSES * dim;
        for (c, r) in residual.iter().enumerate() {
            self.add(bias_base + c, coeff * r);
        }
    }

    pub fn from_example_grad(n_params: usize, grad: &ExampleGrad) -> BatchGrad {
        let mut out = BatchGrad::new(n_params);
        for &(idx, value) in &grad.theta {
            out.add(idx as usize, value);
        }
        let bias_base = n_params - N_CLASSES;
        for (c, b) in grad.bias.iter().enumerate() {
            out.add(bias_base + c, *b);
        }
        out
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn value(&self, idx: u32) -> f64 {
        self.dense[idx as usize]
    }

    pub fn is_finite(&self) -> bool {
        self.active.iter().all(|&i| self.dense[i as usize].is_finite())
    }
}

/// Adaptive-moment optimizer state: per-parameter first/second moment
/// accumulators with bias correction.
///
/// The update rule is `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + 1e-8)` with `b1 = 0.9`,
/// `b2 = 0.999` and bias-corrected `m_hat`, `v_hat`.
///
/// Parameters that have never received a gradient have `m = v = 0` and a
/// zero update, so the step only visits parameters touched so far; this is
/// exactly equivalent to the dense update.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    touched: Vec<bool>,
    touched_order: Vec<u32>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, n_params: usize) -> Result<OptimizerState> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {learning_rate} must be positive and finite"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            touched: vec![false; n_params],
            touched_order: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn second_moment(&self, idx: usize) -> f64 {
        self.v[idx]
    }
}

/// One optimizer step over the aggregated batch gradient. Fails on
/// non-finite gradients so training aborts with a diagnostic instead of
/// poisoning the parameters.
pub fn apply_update(
    model: &mut Model,
    opt: &mut OptimizerState,
    grad: &BatchGrad,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradient in optimizer step".into(),
        ));
    }
    for &idx in grad.active() {
        if !opt.touched[idx as usize] {
            opt.touched[idx as usize] = true;
            opt.touched_order.push(idx);
        }
    }
    opt.step += 1;
    let c1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let c2 = 1.0 - opt.beta2.powi(opt.step as i32);
    let params = model.params_mut();
    for &idx in &opt.touched_order {
        let i = idx as usize;
        let g = grad.dense[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = opt.m[i] / c1;
        let v_hat = opt.v[i] / c2;
        params[i] -= opt.learning_rate * m_hat / (v_hat.sqrt() + opt.epsilon);
    }
    Ok(())
}

/// Writes the checkpoint: magic, hash_bits, mode, hash seed, the weight
/// matrix row-major, then the bias, all little-endian `f64`.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&[model.hash_bits as u8, model.mode.to_byte()])?;
    out.write_all(&model.hash_seed.to_le_bytes())?;
    let dim = model.dim();
    for c in 0..N_CLASSES {
        for f in 0..dim {
            out.write_all(&model.params[c * dim + f].to_le_bytes())?;
        }
    }
    for c in 0..N_CLASSES {
        out.write_all(&model.bias(c).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bad = |message: &str| Error::BadCheckpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic string"));
    }
    let mut header = [0u8; 2];
    reader.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    let hash_bits = u32::from(header[0]);
    let mode = Mode::from_byte(header[1]).ok_or_else(|| bad("unknown mode byte"))?;
    let mut seed_bytes = [0u8; 8];
    reader
        .read_exact(&mut seed_bytes)
        .map_err(|_| bad("truncated header"))?;
    let hash_seed = u64::from_le_bytes(seed_bytes);

    let mut model = Model::zeros(hash_bits, mode, hash_seed).map_err(|_| bad("bad hash_bits"))?;
    let n = model.n_params();
    let mut buf = [0u8; 8];
    for i in 0..n {
        reader
            .read_exact(&mut buf)
            .map_err(|_| bad("truncated parameters"))?;
        model.params[i] = f64::from_le_bytes(buf);
    }
    if reader.read(&mut buf).map_err(Error::Io)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(model)
}
