//! `rwlab` command line: reproducible re-weighting experiments.
//!
//! Subcommands: `stats`, `generate`, `train`, `compare`, `eval`. Exit
//! codes: 0 success, 2 input/configuration error, 3 numeric failure.

mod compare;
mod config;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rwlab::corpus::{
    compute_stats, generate_synthetic, load_corpus, save_corpus, SyntheticSpec,
};
use rwlab::error::{Error, Result};
use rwlab::eval::{evaluate_with_mode, SplitFilter};
use rwlab::model::{load_checkpoint, Mode};
use rwlab::trainer::{train, write_run_dir};
use rwlab::weighting::SchemeKind;

use crate::compare::{render_table, run_compare, CompareOptions};
use crate::config::{read_json_config, CompareConfig, TrainCommandConfig};

#[derive(Parser)]
#[command(name = "rwlab", version, about = "Example re-weighting laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics of a JSONL corpus.
    Stats {
        path: PathBuf,
        /// Also write the JSON stats object to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset (four JSONL splits plus a manifest).
    Generate {
        /// SyntheticSpec JSON file; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "synthetic-data")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_sentences: Option<usize>,
        #[arg(long)]
        contrastive_rate: Option<f64>,
    },
    /// Train one scheme and write the run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        validation_size: Option<usize>,
        #[arg(long)]
        hash_bits: Option<u32>,
        /// Featurization mode: aspect_aware or aspect_blind.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train every scheme over several seeds and aggregate the metrics.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Parallel training jobs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_runs: Option<usize>,
        /// Expand adaptive schemes over the configured epsilon grid.
        #[arg(long)]
        sweep_epsilon: bool,
        /// Keep per-run model.bin checkpoints (large).
        #[arg(long)]
        keep_models: bool,
    },
    /// Evaluate a checkpoint on a JSONL corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict to examples from contrastive sentences.
        #[arg(long)]
        contrastive_only: bool,
        /// Featurize without aspect information (the removal probe).
        #[arg(long)]
        no_aspect: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "aspect_aware" => Ok(Mode::AspectAware),
        "aspect_blind" => Ok(Mode::AspectBlind),
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (expected aspect_aware or aspect_blind)"
        ))),
    }
}

fn cmd_stats(path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let corpus = load_corpus(&path)?;
    let stats = compute_stats(&corpus);
    println!("dataset: {}", path.display());
    println!("  sentences:               {}", stats.n_sentences);
    println!("  aspects:                 {}", stats.n_aspects);
    println!("  positive:                {}", stats.n_positive);
    println!("  negative:                {}", stats.n_negative);
    println!("  neutral:                 {}", stats.n_neutral);
    println!("  sentences with aspect:   {}", stats.n_sentences_with_aspect);
    println!("  contrastive sentences:   {}", stats.n_contrastive_sentences);
    println!("  % contrastive:           {:.1}%", stats.pct_contrastive);
    if stats.no_aspect_sentences {
        eprintln!("warning: no aspect-bearing sentences; percentage reported as 0");
    }
    let json = serde_json::to_string_pretty(&stats)
        .map_err(|e| Error::Config(format!("serializing stats: {e}")))?;
    println!("{json}");
    if let Some(out) = out {
        fs::write(out, json + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerateManifest {
    schema: &'static str,
    spec: SyntheticSpec,
    seed: u64,
    splits: Vec<SplitManifest>,
}

#[derive(Serialize)]
struct SplitManifest {
    name: &'static str,
    file: &'static str,
    sentences: usize,
    examples: usize,
    contrastive_sentences: usize,
}

fn cmd_generate(
    spec_path: Option<PathBuf>,
    out_dir: PathBuf,
    seed: Option<u64>,
    n_sentences: Option<usize>,
    contrastive_rate: Option<f64>,
) -> Result<()> {
    let mut spec: SyntheticSpec = match spec_path {
        Some(p) => read_json_config(&p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(n) = n_sentences {
        spec.n_sentences = n;
    }
    if let Some(rate) = contrastive_rate {
        spec.contrastive_rate = rate;
    }

    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&out_dir)?;
    let splits = [
        ("train", "train.jsonl", &data.train),
        ("valid", "valid.jsonl", &data.valid),
        ("test_full", "test_full.jsonl", &data.test_full),
        (
            "test_contrastive",
            "test_contrastive.jsonl",
            &data.test_contrastive,
        ),
    ];
    let mut manifest_splits = Vec::new();
    for (name, file, corpus) in splits {
        save_corpus(corpus, &out_dir.join(file))?;
        let stats = compute_stats(corpus);
        manifest_splits.push(SplitManifest {
            name,
            file,
            sentences: stats.n_sentences as usize,
            examples: stats.n_aspects as usize,
            contrastive_sentences: stats.n_contrastive_sentences as usize,
        });
        println!(
            "wrote {:<22} {:>5} sentences, {:>5} examples, {:>4} contrastive",
            file, stats.n_sentences, stats.n_aspects, stats.n_contrastive_sentences
        );
    }
    let manifest = GenerateManifest {
        schema: "rwlab.generate.v1",
        seed: spec.seed,
        spec,
        splits: manifest_splits,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("serializing manifest: {e}")))?;
    fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    scheme: Option<String>,
    epsilon: Option<f64>,
    gamma: Option<f64>,
    seed: Option<u64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    learning_rate: Option<f64>,
    patience: Option<usize>,
    validation_size: Option<usize>,
    hash_bits: Option<u32>,
    mode: Option<String>,
) -> Result<()> {
    let mut cfg: TrainCommandConfig = read_json_config(&config_path)?;
    if let Some(s) = scheme {
        cfg.train.scheme.scheme = SchemeKind::parse(&s)?;
    }
    if let Some(e) = epsilon {
        cfg.train.scheme.epsilon = e;
    }
    if let Some(g) = gamma {
        cfg.train.scheme.gamma = g;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(b) = batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(m) = max_epochs {
        cfg.train.max_epochs = m;
    }
    if let Some(lr) = learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(p) = patience {
        cfg.train.patience = p;
    }
    if let Some(v) = validation_size {
        cfg.train.validation_size = v;
    }
    if let Some(h) = hash_bits {
        cfg.train.hash_bits = h;
    }
    if let Some(m) = mode {
        cfg.train.mode = parse_mode(&m)?;
    }
    let out_dir = out_dir
        .or(cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no out_dir given (config key or --out-dir)".into()))?;

    let started = Instant::now();
    let data = cfg.dataset.load(cfg.train.validation_size)?;
    let run = train(&data.train, &data.valid, &cfg.train)?;
    write_run_dir(&run, &out_dir)?;
    let elapsed = started.elapsed().as_secs_f64();

    for record in &run.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  val acc {:.4}  val mf1 {:.4}  r {:.4}  alpha {:>7.4}  incorrect-contrastive {}",
            record.epoch,
            record.train_loss,
            record.val_accuracy,
            record.val_macro_f1,
            record.error_rate,
            record.alpha,
            record.incorrect_contrastive
        );
    }
    println!(
        "best epoch {} ({} train examples, {} validation examples)",
        run.best_epoch, run.n_train_examples, run.n_validation_examples
    );
    println!("run directory: {}", out_dir.display());

    // wall-clock time lives outside run.json so reruns stay byte-identical
    let timing = format!("{{\"elapsed_seconds\": {elapsed:.3}}}\n");
    fs::write(out_dir.join("timing.json"), timing)?;
    println!("elapsed: {elapsed:.2}s");
    Ok(())
}

fn cmd_compare(
    config_path: PathBuf,
    out_dir: Option<PathBuf>,
    jobs: usize,
    seed: Option<u64>,
    n_runs: Option<usize>,
    sweep_epsilon: bool,
    keep_models: bool,
) -> Result<()> {
    let mut cfg: CompareConfig = read_json_config(&config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(n) = n_runs {
        cfg.train.n_runs = n;
    }
    let out_dir = out_dir.or(cfg.out_dir.clone());
    let options = CompareOptions {
        jobs: jobs.max(1),
        sweep_epsilon,
        keep_models,
    };
    let report = run_compare(&cfg, out_dir.clone(), &options)?;
    print!("{}", render_table(&report));
    if let Some(dir) = out_dir {
        println!("aggregate written to {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(
    model_path: PathBuf,
    data_path: PathBuf,
    contrastive_only: bool,
    no_aspect: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = load_checkpoint(&model_path)?;
    let corpus = load_corpus(&data_path)?;
    let filter = if contrastive_only {
        SplitFilter::ContrastiveOnly
    } else {
        SplitFilter::All
    };
    let mode = if no_aspect {
        Mode::AspectBlind
    } else {
        model.mode()
    };
    let report = evaluate_with_mode(&model, &corpus, filter, mode)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    println!("{json}");
    if let Some(out) = out {
        fs::write(out, json + "\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { path, out } => cmd_stats(path, out),
        Command::Generate {
            spec,
            out_dir,
            seed,
            n_sentences,
            contrastive_rate,
        } => cmd_generate(spec, out_dir, seed, n_sentences, contrastive_rate),
        Command::Train {
            config,
            out_dir,
            scheme,
            epsilon,
            gamma,
            seed,
            batch_size,
            max_epochs,
            learning_rate,
            patience,
            validation_size,
            hash_bits,
            mode,
        } => cmd_train(
            config,
            out_dir,
            scheme,
            epsilon,
            gamma,
            seed,
            batch_size,
            max_epochs,
            learning_rate,
            patience,
            validation_size,
            hash_bits,
            mode,
        ),
        Command::Compare {
            config,
            out_dir,
            jobs,
            seed,
            n_runs,
            sweep_epsilon,
            keep_models,
        } => cmd_compare(config, out_dir, jobs, seed, n_runs, sweep_epsilon, keep_models),
        Command::Eval {
            model,
            data,
            contrastive_only,
            no_aspect,
            out,
        } => cmd_eval(model, data, contrastive_only, no_aspect, out),
    }
}

fn main() {
    // die quietly when stdout is closed early (e.g. piped into `head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
