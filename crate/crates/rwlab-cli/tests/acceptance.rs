//! Acceptance suite: every release-gating property of the laboratory, one
//! test per criterion, each printing a pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The directional benchmarks (criteria 5-7) train on the default synthetic
//! corpus (1000 training sentences, contrastive rate 0.12) over the ten run
//! seeds 0..=9 with the default training configuration, and are shared
//! across tests through a lazily initialized cache.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use rwlab::corpus::{generate_synthetic, Polarity, SyntheticData, SyntheticSpec};
use rwlab::eval::{count_incorrect_contrastive, evaluate, SplitFilter};
use rwlab::model::{
    example_loss_and_grad, forward, loss_from_probs, FeatureVector, Mode, Model, N_CLASSES,
};
use rwlab::trainer::{train, train_with_initial_weights, TrainConfig, TrainRun};
use rwlab::weighting::{init_weights, log_ratio, SchemeConfig, SchemeKind};

const SEEDS: std::ops::Range<u64> = 0..10;

fn check(criterion: &str, ok: bool, details: &str) {
    println!(
        "criterion {criterion}: {} — {details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {details}");
}

// ---------------------------------------------------------------------
// criterion 1: exactness of the log correct-incorrect ratio
// ---------------------------------------------------------------------

#[test]
fn criterion_1_log_ratio_formulas() {
    let (a0, _) = log_ratio(0.5, 0.0);
    let (a1, _) = log_ratio(0.25, 0.0);
    let (a2, _) = log_ratio(0.25, -0.05);
    let e1 = 3.0f64.ln();
    let e2 = (7.0f64 / 3.0).ln();
    let ok = a0 == 0.0 && (a1 - e1).abs() < 1e-12 && (a2 - e2).abs() < 1e-12;
    check(
        "1 (log-ratio formulas)",
        ok,
        &format!("alpha(0.5,0)={a0:e}, |alpha(0.25,0)-ln3|={:.1e}, |alpha(0.25,-0.05)-ln(7/3)|={:.1e}",
            (a1 - e1).abs(), (a2 - e2).abs()),
    );
}

// ---------------------------------------------------------------------
// criterion 2: analytic gradients vs central finite differences
// ---------------------------------------------------------------------

#[test]
fn criterion_2_gradient_against_finite_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut checked = 0usize;

    for _ in 0..100 {
        let mut model = Model::zeros(6, Mode::AspectAware, 0).unwrap();
        let n = model.n_params();
        for i in 0..n {
            model.params_mut()[i] = rng.gen_range(-2.0..2.0);
        }
        let mut entries = Vec::new();
        let mut used = std::collections::BTreeSet::new();
        for _ in 0..rng.gen_range(1..9usize) {
            let idx = rng.gen_range(0..model.dim() as u32);
            if used.insert(idx) {
                entries.push((idx, rng.gen_range(0.25..3.0)));
            }
        }
        let fv = FeatureVector::from_entries(entries);
        let label = Polarity::from_index(rng.gen_range(0..3));

        let (_, grad) = example_loss_and_grad(&model, &fv, label);
        let mut params: Vec<(usize, f64)> =
            grad.theta.iter().map(|&(i, g)| (i as usize, g)).collect();
        for c in 0..N_CLASSES {
            params.push((n - N_CLASSES + c, grad.bias[c]));
        }

        for (idx, analytic) in params {
            let h = 1e-5;
            let mut perturbed = model.clone();
            perturbed.params_mut()[idx] += h;
            let plus = loss_from_probs(&forward(&perturbed, &fv), label);
            perturbed.params_mut()[idx] -= 2.0 * h;
            let minus = loss_from_probs(&forward(&perturbed, &fv), label);
            let numeric = (plus - minus) / (2.0 * h);
            let diff = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            worst_abs = worst_abs.max(diff);
            if scale > 0.0 && diff > 1e-8 {
                worst_rel = worst_rel.max(diff / scale);
            }
            checked += 1;
        }
    }
    check(
        "2 (gradient correctness)",
        worst_rel <= 1e-5,
        &format!(
            "{checked} parameter checks over 100 trials; worst relative error {worst_rel:.2e} \
             (absolute {worst_abs:.2e}, floor 1e-8)"
        ),
    );
}

// ---------------------------------------------------------------------
// criterion 3: scheme-equivalence oracles, bit-exact under a shared seed
// ---------------------------------------------------------------------

fn param_bits(run: &TrainRun) -> Vec<u64> {
    run.model.params().iter().map(|p| p.to_bits()).collect()
}

fn metric_bits(run: &TrainRun) -> Vec<(u64, u64)> {
    run.epochs
        .iter()
        .map(|e| (e.val_accuracy.to_bits(), e.val_macro_f1.to_bits()))
        .collect()
}

#[test]
fn criterion_3_scheme_equivalence_oracles() {
    // (a) the adaptive scheme on a corpus without contrastive sentences
    let data = generate_synthetic(&SyntheticSpec {
        n_sentences: 200,
        contrastive_rate: 0.0,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let base = TrainConfig {
        hash_bits: 12,
        max_epochs: 5,
        seed: 17,
        ..TrainConfig::default()
    };
    let uniform = train(
        &data.train,
        &data.valid,
        &TrainConfig {
            scheme: SchemeConfig::new(SchemeKind::Uniform),
            ..base.clone()
        },
    )
    .unwrap();
    let arw = train(
        &data.train,
        &data.valid,
        &TrainConfig {
            scheme: SchemeConfig::new(SchemeKind::Arw),
            ..base.clone()
        },
    )
    .unwrap();
    let a_ok = param_bits(&uniform) == param_bits(&arw) && metric_bits(&uniform) == metric_bits(&arw);
    check(
        "3a (gated scheme on zero-contrastive data == uniform)",
        a_ok,
        "parameter trajectories and validation metrics bit-identical",
    );

    // (b) focal with gamma 0 == uniform; 1/n must be a power of two for
    // bit-level equality, hence the 1024-example truncation
    let data = generate_synthetic(&SyntheticSpec {
        n_sentences: 700,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .unwrap();
    assert!(data.train.len() >= 1024);
    let train_corpus = data.train.truncate_examples(1024);
    let uniform = train(
        &train_corpus,
        &data.valid,
        &TrainConfig {
            scheme: SchemeConfig::new(SchemeKind::Uniform),
            ..base.clone()
        },
    )
    .unwrap();
    let focal = train(
        &train_corpus,
        &data.valid,
        &TrainConfig {
            scheme: SchemeConfig::new(SchemeKind::Focal).with_gamma(0.0),
            ..base.clone()
        },
    )
    .unwrap();
    let b_ok = param_bits(&uniform) == param_bits(&focal) && metric_bits(&uniform) == metric_bits(&focal);
    check(
        "3b (focal gamma=0 == uniform)",
        b_ok,
        "trajectories bit-identical on a 1024-example corpus",
    );

    // (c) scale invariance of the initial weights: exact for powers of two,
    // to double-precision tolerance for arbitrary factors
    let data = generate_synthetic(&SyntheticSpec {
        n_sentences: 150,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let config = TrainConfig {
        scheme: SchemeConfig::new(SchemeKind::Arw),
        ..base.clone()
    };
    let reference = train(&data.train, &data.valid, &config).unwrap();
    let mut c_ok = true;
    for factor in [0.25, 4.0, 1024.0] {
        let mut init = init_weights(
            data.train.len(),
            &config.scheme,
            &data.train.contrastive_mask(),
        )
        .unwrap();
        init.scale(factor);
        let scaled = train_with_initial_weights(&data.train, &data.valid, &config, init).unwrap();
        c_ok &= param_bits(&reference) == param_bits(&scaled);
    }
    let mut init = init_weights(
        data.train.len(),
        &config.scheme,
        &data.train.contrastive_mask(),
    )
    .unwrap();
    init.scale(3.0);
    let scaled = train_with_initial_weights(&data.train, &data.valid, &config, init).unwrap();
    let mut worst = 0.0f64;
    for (a, b) in reference.model.params().iter().zip(scaled.model.params()) {
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    c_ok &= worst <= 1e-9;
    check(
        "3c (initial-weight scale invariance)",
        c_ok,
        &format!("power-of-two factors bit-identical; factor 3.0 within {worst:.1e}"),
    );
}

// ---------------------------------------------------------------------
// criterion 4: gating — non-contrastive weights never move
// ---------------------------------------------------------------------

#[test]
fn criterion_4_gating_invariant() {
    let mut checked_epochs = 0usize;
    for seed in 1..=5u64 {
        let data = generate_synthetic(&SyntheticSpec {
            n_sentences: 250,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let config = TrainConfig {
            scheme: SchemeConfig::new(SchemeKind::Arw),
            hash_bits: 12,
            seed,
            max_epochs: 8,
            ..TrainConfig::default()
        };
        let run = train(&data.train, &data.valid, &config).unwrap();
        let mask = data.train.contrastive_mask();
        let initial = &run.weight_trajectory[0];
        let mut rescale = 1.0f64;
        for (epoch, snapshot) in run.weight_trajectory.iter().enumerate().skip(1) {
            if let Some(f) = run.weight_state.epoch_log[epoch - 1].rescale_factor {
                rescale *= f;
            }
            for (i, &contrastive) in mask.iter().enumerate() {
                if !contrastive {
                    assert_eq!(
                        snapshot[i].to_bits(),
                        (initial[i] * rescale).to_bits(),
                        "seed {seed} epoch {epoch} example {i}"
                    );
                }
            }
            checked_epochs += 1;
        }
    }
    check(
        "4 (gating invariant)",
        true,
        &format!("non-contrastive weights unchanged across {checked_epochs} epoch snapshots, 5 seeds"),
    );
}

// ---------------------------------------------------------------------
// shared benchmark for criteria 5-7
// ---------------------------------------------------------------------

struct SchemeRun {
    full_accuracy: f64,
    contrastive_accuracy: f64,
    incorrect_contrastive: usize,
    posneg_blind_accuracy: Option<f64>,
}

struct Bench {
    runs: BTreeMap<&'static str, Vec<SchemeRun>>,
}

fn posneg_subset(data: &SyntheticData) -> rwlab::Corpus {
    data.test_contrastive.filter_sentences(|sid| {
        let labels: Vec<Polarity> = data
            .test_contrastive
            .sentence_examples(sid)
            .iter()
            .map(|&i| data.test_contrastive.examples()[i].label)
            .collect();
        labels.contains(&Polarity::Positive) && labels.contains(&Polarity::Negative)
    })
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let posneg = posneg_subset(&data);
        assert!(posneg.len() >= 10, "pos/neg subset too small to measure");

        let mut runs: BTreeMap<&'static str, Vec<SchemeRun>> = BTreeMap::new();
        let variants: [(&'static str, SchemeConfig, Mode); 4] = [
            ("uniform", SchemeConfig::new(SchemeKind::Uniform), Mode::AspectAware),
            ("manual", SchemeConfig::new(SchemeKind::Manual), Mode::AspectAware),
            ("arw_all", SchemeConfig::new(SchemeKind::ArwAll), Mode::AspectAware),
            ("uniform_blind", SchemeConfig::new(SchemeKind::Uniform), Mode::AspectBlind),
        ];
        for (name, scheme, mode) in variants {
            for seed in SEEDS {
                let config = TrainConfig {
                    scheme: scheme.clone(),
                    mode,
                    seed,
                    ..TrainConfig::default()
                };
                let run = train(&data.train, &data.valid, &config).unwrap();
                let full = evaluate(&run.model, &data.test_full, SplitFilter::All).unwrap();
                let contra =
                    evaluate(&run.model, &data.test_contrastive, SplitFilter::All).unwrap();
                let posneg_blind = (mode == Mode::AspectBlind)
                    .then(|| evaluate(&run.model, &posneg, SplitFilter::All).unwrap().accuracy);
                runs.entry(name).or_default().push(SchemeRun {
                    full_accuracy: full.accuracy,
                    contrastive_accuracy: contra.accuracy,
                    incorrect_contrastive: count_incorrect_contrastive(&run.model, &data.train),
                    posneg_blind_accuracy: posneg_blind,
                });
            }
        }
        Bench { runs }
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------
// criterion 5: the aspect-blind model hits the forced 50% ceiling while
// staying close to the aspect-aware model on the full test set
// ---------------------------------------------------------------------

#[test]
fn criterion_5_aspect_blind_ceiling() {
    let bench = bench();
    let blind = &bench.runs["uniform_blind"];
    let aware = &bench.runs["uniform"];

    let ceiling_exact = blind
        .iter()
        .all(|r| r.posneg_blind_accuracy == Some(0.5));
    let blind_full = mean(blind.iter().map(|r| r.full_accuracy));
    let aware_full = mean(aware.iter().map(|r| r.full_accuracy));
    let gap = (aware_full - blind_full).abs();

    check(
        "5 (aspect-blind ceiling)",
        ceiling_exact && gap <= 0.05,
        &format!(
            "pos/neg contrastive accuracy exactly 0.5 in {}/10 seeds; full-set gap {:.2} points",
            blind.iter().filter(|r| r.posneg_blind_accuracy == Some(0.5)).count(),
            100.0 * gap
        ),
    );
}

// ---------------------------------------------------------------------
// criterion 6: adaptive re-weighting beats uniform where it matters
// ---------------------------------------------------------------------

#[test]
fn criterion_6_adaptive_reweighting_effectiveness() {
    let bench = bench();
    let uniform = &bench.runs["uniform"];
    let arw_all = &bench.runs["arw_all"];

    let contra_gap = mean(arw_all.iter().map(|r| r.contrastive_accuracy))
        - mean(uniform.iter().map(|r| r.contrastive_accuracy));
    check(
        "6a (contrastive gain >= 5 points)",
        contra_gap >= 0.05,
        &format!("mean contrastive accuracy gap {:+.2} points", 100.0 * contra_gap),
    );

    let full_gap = (mean(arw_all.iter().map(|r| r.full_accuracy))
        - mean(uniform.iter().map(|r| r.full_accuracy)))
    .abs();
    check(
        "6b (full-set within 2 points)",
        full_gap <= 0.02,
        &format!("mean full-set accuracy gap {:.2} points", 100.0 * full_gap),
    );

    let wins = arw_all
        .iter()
        .zip(uniform)
        .filter(|(a, u)| a.incorrect_contrastive < u.incorrect_contrastive)
        .count();
    check(
        "6c (fewer unresolved contrastive examples in >= 8/10 seeds)",
        wins >= 8,
        &format!("lower count in {wins}/10 seeds"),
    );
}

// ---------------------------------------------------------------------
// criterion 7: manual re-weighting
// ---------------------------------------------------------------------

#[test]
fn criterion_7_manual_reweighting() {
    let mask = [
        true, false, false, true, false, false, false, true, false, false,
    ];
    let state = init_weights(10, &SchemeConfig::new(SchemeKind::Manual), &mask).unwrap();
    let weights_ok = mask
        .iter()
        .enumerate()
        .all(|(i, &c)| state.weights[i] == if c { 7.0 } else { 3.0 });

    let bench = bench();
    let wins = bench.runs["manual"]
        .iter()
        .zip(&bench.runs["uniform"])
        .filter(|(m, u)| m.contrastive_accuracy >= u.contrastive_accuracy)
        .count();
    check(
        "7 (manual re-weighting)",
        weights_ok && wins >= 6,
        &format!("weights (7, 3) exact; contrastive accuracy >= uniform in {wins}/10 seeds"),
    );
}

// ---------------------------------------------------------------------
// criterion 8: dataset statistics against the hand-counted fixture
// ---------------------------------------------------------------------

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reviews12.jsonl")
}

#[test]
fn criterion_8_statistics_reproduction() {
    let output = Command::new(env!("CARGO_BIN_EXE_rwlab"))
        .arg("stats")
        .arg(fixture_path())
        .output()
        .expect("running the stats command");
    assert!(output.status.success(), "stats exited with {:?}", output.status);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let json_start = stdout.find('{').expect("stats prints a JSON object");
    let stats: serde_json::Value = serde_json::from_str(&stdout[json_start..]).unwrap();

    let expect = [
        ("n_sentences", 12u64),
        ("n_aspects", 14),
        ("n_positive", 7),
        ("n_negative", 4),
        ("n_neutral", 3),
        ("n_sentences_with_aspect", 10),
        ("n_contrastive_sentences", 3),
    ];
    let counts_ok = expect
        .iter()
        .all(|(key, value)| stats[*key].as_u64() == Some(*value));
    let pct = stats["pct_contrastive"].as_f64().unwrap();
    check(
        "8 (hand-counted statistics)",
        counts_ok && pct == 30.0,
        &format!("fixture counts exact, contrastive percentage {pct}"),
    );

    // Converted benchmark files are optional; when supplied, the reported
    // contrastive counts must match the published summary under the
    // distinct-label convention (165 / 11.3% laptop, 319 / 16.1% restaurant).
    match std::env::var("RWLAB_SEMEVAL_DIR") {
        Ok(dir) => {
            for (file, contrastive, pct_expected) in [
                ("laptop_train.jsonl", 165u64, 11.3f64),
                ("restaurant_train.jsonl", 319, 16.1),
            ] {
                let path = PathBuf::from(&dir).join(file);
                let corpus = rwlab::corpus::load_corpus(&path).unwrap();
                let stats = rwlab::corpus::compute_stats(&corpus);
                let pct_rounded = (stats.pct_contrastive * 10.0).round() / 10.0;
                check(
                    "8 (converted benchmark statistics)",
                    stats.n_contrastive_sentences == contrastive && pct_rounded == pct_expected,
                    &format!(
                        "{file}: {} contrastive ({pct_rounded}%), expected {contrastive} ({pct_expected}%)",
                        stats.n_contrastive_sentences
                    ),
                );
            }
        }
        Err(_) => println!(
            "criterion 8 (converted benchmark statistics): SKIPPED — set RWLAB_SEMEVAL_DIR to check"
        ),
    }
}

// ---------------------------------------------------------------------
// criterion 9: byte-identical training runs
// ---------------------------------------------------------------------

#[test]
fn criterion_9_run_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("train.json");
    std::fs::write(
        &config_path,
        r#"{
  "dataset": {"synthetic": {"n_sentences": 300, "contrastive_rate": 0.12, "seed": 7}},
  "train": {"seed": 5, "max_epochs": 6, "hash_bits": 14}
}"#,
    )
    .unwrap();

    let mut artifacts = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let status = Command::new(env!("CARGO_BIN_EXE_rwlab"))
            .arg("train")
            .arg("--config")
            .arg(&config_path)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .expect("running the train command");
        assert!(status.status.success(), "train failed: {status:?}");
        artifacts.push((
            std::fs::read(out.join("run.json")).unwrap(),
            std::fs::read(out.join("model.bin")).unwrap(),
            std::fs::read(out.join("weights.csv")).unwrap(),
        ));
    }
    let ok = artifacts[0].0 == artifacts[1].0
        && artifacts[0].1 == artifacts[1].1
        && artifacts[0].2 == artifacts[1].2;
    check(
        "9 (byte-identical reruns)",
        ok,
        &format!(
            "run.json ({} bytes), model.bin ({} bytes), weights.csv ({} bytes) identical",
            artifacts[0].0.len(),
            artifacts[0].1.len(),
            artifacts[0].2.len()
        ),
    );
}
