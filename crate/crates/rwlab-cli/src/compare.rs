//! The `compare` command: trains every scheme over `n_runs` seeds,
//! evaluates on the full and contrastive test sets (plus the aspect-blind
//! probe for the uniform baseline), and renders the aggregate table.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use rwlab::error::{Error, Result};
use rwlab::eval::{
    aggregate, aggregate_to_csv, count_incorrect_contrastive, evaluate, evaluate_with_mode,
    AggregateReport, RunOutcome, SplitFilter,
};
use rwlab::model::Mode;
use rwlab::trainer::{train, write_run_dir, TrainConfig};
use rwlab::weighting::{SchemeConfig, SchemeKind};

use crate::config::{config_fingerprint, CompareConfig, LoadedData};

pub struct CompareOptions {
    pub jobs: usize,
    pub sweep_epsilon: bool,
    pub keep_models: bool,
}

struct Job {
    scheme: SchemeConfig,
    seed: u64,
}

fn scheme_grid(config: &CompareConfig, sweep: bool) -> Vec<SchemeConfig> {
    if !sweep {
        return config.schemes.clone();
    }
    let mut out = Vec::new();
    for scheme in &config.schemes {
        if scheme.scheme.is_adaptive() {
            for &epsilon in &config.epsilon_sweep {
                out.push(scheme.clone().with_epsilon(epsilon));
            }
        } else {
            out.push(scheme.clone());
        }
    }
    out
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn run_job(
    job: &Job,
    base: &TrainConfig,
    data: &LoadedData,
    out_dir: Option<&Path>,
    keep_models: bool,
) -> Result<RunOutcome> {
    let mut config = base.clone();
    config.scheme = job.scheme.clone();
    config.seed = job.seed;

    let run = train(&data.train, &data.valid, &config)?;
    let test_full = data
        .test_full
        .as_ref()
        .expect("compare requires a test split");

    let mut reports = std::collections::BTreeMap::new();
    let mut full = evaluate(&run.model, test_full, SplitFilter::All)?;
    full.split = "full".into();
    reports.insert("full".to_string(), full);

    match &data.test_contrastive {
        Some(tc) if !tc.is_empty() => {
            let mut report = evaluate(&run.model, tc, SplitFilter::All)?;
            report.split = "contrastive".into();
            reports.insert("contrastive".to_string(), report);
        }
        _ => {}
    }

    // aspect-removal probe, run for the uniform baseline only
    if job.scheme.scheme == SchemeKind::Uniform {
        let mut probe =
            evaluate_with_mode(&run.model, test_full, SplitFilter::All, Mode::AspectBlind)?;
        probe.split = "full_no_aspect".into();
        reports.insert("full_no_aspect".to_string(), probe);
    }

    let incorrect = count_incorrect_contrastive(&run.model, &data.train) as u64;

    if let Some(dir) = out_dir {
        let run_dir = dir
            .join("runs")
            .join(sanitize(&job.scheme.label()))
            .join(job.seed.to_string());
        write_run_dir(&run, &run_dir)?;
        if !keep_models {
            // per-run checkpoints are large; drop them unless asked to keep
            let _ = fs::remove_file(run_dir.join("model.bin"));
        }
    }

    Ok(RunOutcome {
        scheme: job.scheme.label(),
        fingerprint: config_fingerprint(base, &job.scheme),
        seed: job.seed,
        reports,
        incorrect_contrastive: incorrect,
    })
}

fn split_display_name(split: &str) -> &str {
    match split {
        "full" => "on Full Test Set",
        "full_no_aspect" => "on Full Test Set w/o aspect",
        "contrastive" => "on Contrastive Test Set",
        other => other,
    }
}

/// Text table with one block per scheme and one row per evaluated split,
/// metrics as percentages.
pub fn render_table(report: &AggregateReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<44} {:>16} {:>16}\n",
        "scheme / split", "Acc.", "MF1"
    ));
    out.push_str(&"-".repeat(78));
    out.push('\n');
    for scheme in &report.schemes {
        out.push_str(&format!(
            "{} ({} runs)\n",
            scheme.scheme, scheme.n_runs
        ));
        let mut splits: Vec<&String> = scheme.splits.keys().collect();
        splits.sort_by_key(|s| match s.as_str() {
            "full" => 0,
            "full_no_aspect" => 1,
            "contrastive" => 2,
            _ => 3,
        });
        for split in splits {
            let agg = &scheme.splits[split];
            out.push_str(&format!(
                "  {:<42} {:>7.2} ± {:>5.2} {:>7.2} ± {:>5.2}\n",
                split_display_name(split),
                100.0 * agg.accuracy.mean,
                100.0 * agg.accuracy.stddev,
                100.0 * agg.macro_f1.mean,
                100.0 * agg.macro_f1.stddev,
            ));
        }
        out.push_str(&format!(
            "  {:<42} {:>7.1} ± {:>5.1}\n",
            "incorrect contrastive train examples",
            scheme.incorrect_contrastive.mean,
            scheme.incorrect_contrastive.stddev,
        ));
    }
    out
}

pub fn run_compare(
    config: &CompareConfig,
    out_dir: Option<PathBuf>,
    options: &CompareOptions,
) -> Result<AggregateReport> {
    if config.schemes.is_empty() {
        return Err(Error::Config("scheme list is empty".into()));
    }
    let data = config.dataset.load(config.train.validation_size)?;
    if data.test_full.is_none() {
        return Err(Error::Config(
            "compare needs a test split (synthetic dataset or test_path)".into(),
        ));
    }

    let schemes = scheme_grid(config, options.sweep_epsilon);
    let mut jobs = Vec::new();
    for scheme in &schemes {
        for k in 0..config.train.n_runs {
            jobs.push(Job {
                scheme: scheme.clone(),
                seed: config.train.seed + k as u64,
            });
        }
    }

    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)?;
    }

    let outcomes: Vec<Result<RunOutcome>> = if options.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| Error::Config(format!("building thread pool: {e}")))?;
        pool.install(|| {
            jobs.par_iter()
                .map(|job| {
                    run_job(
                        job,
                        &config.train,
                        &data,
                        out_dir.as_deref(),
                        options.keep_models,
                    )
                })
                .collect()
        })
    } else {
        jobs.iter()
            .map(|job| {
                run_job(
                    job,
                    &config.train,
                    &data,
                    out_dir.as_deref(),
                    options.keep_models,
                )
            })
            .collect()
    };
    let outcomes: Vec<RunOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let report = aggregate(&outcomes)?;
    if let Some(dir) = &out_dir {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Config(format!("serializing aggregate.json: {e}")))?;
        fs::write(dir.join("aggregate.json"), json + "\n")?;
        fs::write(dir.join("aggregate.csv"), aggregate_to_csv(&report))?;
        fs::write(dir.join("table.txt"), render_table(&report))?;
    }
    Ok(report)
}
