use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use crushsim_core::archive::{read_archive, read_run_log};
use crushsim_core::qualify::{evaluate, extract_dataset, model_to_string, split_by_agent, train as fit, BinaryMetrics};
use serde::Serialize;

use crate::inputs::load_config;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Full-force run archive; repeat to pool several runs.
    #[arg(long = "archive", env = "CRUSH_ARCHIVE", value_delimiter = ',', required = true)]
    pub archives: Vec<PathBuf>,
    /// Config TOML whose `training` and `labels` tables apply; defaults to
    /// the first archive's echoed config.
    #[arg(long, env = "CRUSH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Model file to write.
    #[arg(long, env = "CRUSH_OUT")]
    pub out: PathBuf,
    /// Held-out metrics JSON; defaults to `<out>.metrics.json`.
    #[arg(long, env = "CRUSH_METRICS")]
    pub metrics: Option<PathBuf>,
    /// Loss-curve CSV; defaults to `<out>.loss.csv`.
    #[arg(long, env = "CRUSH_LOSS_CURVE")]
    pub loss_curve: Option<PathBuf>,
    /// Fraction of agents whose windows are held out.
    #[arg(long, env = "CRUSH_HOLDOUT", default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, env = "CRUSH_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "CRUSH_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "CRUSH_HIDDEN")]
    pub hidden: Option<usize>,
    /// Training seed; also drives the held-out split.
    #[arg(long, env = "CRUSH_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    schema: u32,
    archives: Vec<String>,
    windows: usize,
    positive_fraction: f64,
    skipped_windows: usize,
    holdout_fraction: f64,
    train: BinaryMetrics,
    held_out: Option<BinaryMetrics>,
    final_loss: Option<f64>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let archives = args
        .archives
        .iter()
        .map(|dir| read_archive(dir).with_context(|| format!("reading archive {}", dir.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = match &args.config {
        Some(p) => load_config(Some(p))?,
        None => archives[0].config.clone(),
    };
    let mut samples = Vec::new();
    let mut skipped = 0;
    for (k, archive) in archives.iter().enumerate() {
        let log = read_run_log(archive, &format!("run{k}"))?;
        let data = extract_dataset(&log, &cfg.labels)
            .with_context(|| format!("labelling {}", archive.dir.display()))?;
        skipped += data.skipped;
        samples.extend(data.samples);
    }
    let hyper = &mut cfg.training;
    if let Some(e) = args.epochs {
        hyper.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        hyper.learning_rate = lr;
    }
    if let Some(h) = args.hidden {
        hyper.hidden = h;
    }
    if let Some(s) = args.seed {
        hyper.seed = s;
    }
    let windows = samples.len();
    let positives = samples.iter().filter(|s| s.label).count();
    let (train_set, held) = split_by_agent(samples, args.holdout, hyper.seed);
    let model = fit(&train_set, hyper)?;
    let p_crit = cfg.qualify.p_crit;
    let report = TrainReport {
        schema: 1,
        archives: args.archives.iter().map(|p| p.display().to_string()).collect(),
        windows,
        positive_fraction: if windows == 0 { 0.0 } else { positives as f64 / windows as f64 },
        skipped_windows: skipped,
        holdout_fraction: args.holdout,
        train: evaluate(&model, &train_set, p_crit)?,
        held_out: if held.is_empty() { None } else { Some(evaluate(&model, &held, p_crit)?) },
        final_loss: model.meta.loss_curve.last().copied(),
    };

    fs::write(&args.out, model_to_string(&model)).with_context(|| format!("writing {}", args.out.display()))?;
    let metrics = args.metrics.clone().unwrap_or_else(|| sibling(&args.out, ".metrics.json"));
    fs::write(&metrics, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", metrics.display()))?;
    let curve = args.loss_curve.clone().unwrap_or_else(|| sibling(&args.out, ".loss.csv"));
    let mut text = String::from("epoch,loss\n");
    for (e, l) in model.meta.loss_curve.iter().enumerate() {
        text.push_str(&format!("{e},{l}\n"));
    }
    fs::write(&curve, text).with_context(|| format!("writing {}", curve.display()))?;

    println!(
        "{windows} windows ({:.1}% positive), {} training, {} held out",
        report.positive_fraction * 100.0,
        train_set.len(),
        held.len()
    );
    match &report.held_out {
        Some(m) => println!("held-out AUC {:.3}, accuracy {:.3}, recall {:.3}", m.auc, m.accuracy, m.recall),
        None => println!("no held-out windows"),
    }
    println!("model written to {}", args.out.display());
    Ok(0)
}
