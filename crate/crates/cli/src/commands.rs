use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use capnet::autodiff::checkpoint;
use capnet::data::{generate_dataset, load_dataset, save_dataset, DatasetSpec, SplitName, DATA_DIR_ENV};
use capnet::eval::{
    evaluate_mse, intermediates_report, permutation_sensitivity, rounded_accuracy, to_csv,
};
use capnet::train::{metrics_csv, timing_csv, train_on, MetricsRecord, RunConfig};
use capnet::{Model, ModelSpec};
use serde::Deserialize;

use crate::error::{create_dir, parse_json, read_text, write_file, CliError};
use crate::manifest::{dataset_ref, resolve_dataset, ExperimentManifest, MANIFEST_FILE};
use crate::Metric;

pub const CHECKPOINT_FILE: &str = "model.ckpt";

pub fn spec_sidecar(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".spec.json");
    PathBuf::from(name)
}

pub fn generate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: DatasetSpec = parse_json(config, "dataset spec")?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let out = match out {
        Some(dir) => dir,
        None => {
            let root = std::env::var_os(DATA_DIR_ENV)
                .ok_or_else(|| CliError::usage(format!("pass --out or set {DATA_DIR_ENV}")))?;
            let stem = config.file_stem().unwrap_or_default();
            PathBuf::from(root).join(stem)
        }
    };
    let dataset = generate_dataset(&spec, None)?;
    save_dataset(&dataset, &out).map_err(CliError::runtime)?;
    println!("wrote {} ({} task)", out.display(), dataset.task.kind);
    for name in SplitName::ALL {
        let split = dataset.split(name);
        let s = split.label_summary();
        println!("{name:>5}: {:>7} bags, label mean {:.4}, stdev {:.4}", split.len(), s.mean, s.stdev);
    }
    Ok(())
}

pub fn train(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: RunConfig = parse_json(config, "run config")?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let data_dir = resolve_dataset(&cfg.dataset);
    let dataset = load_dataset(&data_dir).map_err(|e| CliError::usage(format!("dataset {}: {e}", data_dir.display())))?;
    let data = dataset_ref(&data_dir)?;
    let outcome = train_on(&dataset, &cfg)?;

    create_dir(out)?;
    write_file(&out.join("metrics.csv"), metrics_csv(&outcome.history))?;
    write_file(&out.join("timing.csv"), timing_csv(&outcome.history))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    checkpoint::save(outcome.model.params(), &ckpt).map_err(CliError::runtime)?;
    write_file(&spec_sidecar(&ckpt), serde_json::to_string_pretty(outcome.model.spec()).expect("spec serializes"))?;
    let outputs = ["metrics.csv", "timing.csv", CHECKPOINT_FILE, "model.ckpt.spec.json"];
    let seeds = vec![cfg.seed];
    ExperimentManifest::new(cfg, seeds, Some(data), outputs.map(String::from).to_vec()).write(out)?;

    println!("final val MSE {:.6}", outcome.val_mse);
    if let Some(t) = outcome.test_mse {
        println!("final test MSE {t:.6}");
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub metrics: Vec<Metric>,
    pub split: String,
    pub k: usize,
    pub seed: u64,
}

pub fn load_model(checkpoint: &Path) -> Result<Model, CliError> {
    let spec: ModelSpec = parse_json(&spec_sidecar(checkpoint), "model spec")?;
    let params = checkpoint::load(checkpoint)
        .map_err(|e| CliError::usage(format!("checkpoint {}: {e}", checkpoint.display())))?;
    Ok(Model::from_params(spec, params)?)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if args.metrics.is_empty() {
        return Err(CliError::usage("--metric needs at least one of mse, intermediates, permsens, accuracy"));
    }
    let split_name: SplitName = args.split.parse()?;
    let model = load_model(&args.checkpoint)?;
    let data_dir = resolve_dataset(&args.dataset);
    let dataset = load_dataset(&data_dir).map_err(|e| CliError::usage(format!("dataset {}: {e}", data_dir.display())))?;
    if model.spec().input_dim != dataset.feature_dim() {
        return Err(CliError::usage(format!(
            "checkpoint expects {} input features, dataset {} has {}",
            model.spec().input_dim,
            data_dir.display(),
            dataset.feature_dim()
        )));
    }
    let split = dataset.split(split_name);
    create_dir(&args.out)?;
    let name = model.spec().name();

    for metric in &args.metrics {
        match metric {
            Metric::Mse => {
                let mse = evaluate_mse(&model, split)?;
                write_file(&args.out.join("mse.csv"), to_csv(&["split", "mse"], &[[split_name.to_string(), mse.to_string()]]))?;
                println!("{name} {split_name} MSE {mse:.6}");
            }
            Metric::Accuracy => {
                let acc = rounded_accuracy(&model, split)?;
                write_file(
                    &args.out.join("accuracy.csv"),
                    to_csv(&["split", "accuracy"], &[[split_name.to_string(), acc.to_string()]]),
                )?;
                println!("{name} {split_name} rounded accuracy {acc:.4}");
            }
            Metric::Intermediates => {
                let report = intermediates_report(&model, split, &dataset.task)?;
                let source = if report.pseudo { "pseudo" } else { "capacity" };
                write_file(&args.out.join("intermediates.jsonl"), report.to_jsonl())?;
                write_file(
                    &args.out.join("intermediates.csv"),
                    to_csv(
                        &["split", "source", "mae"],
                        &[[split_name.to_string(), source.to_string(), report.mae.to_string()]],
                    ),
                )?;
                if report.pseudo {
                    println!("{name} has no capacity head; reporting pseudo-intermediates from prefix differences");
                }
                println!("{name} {split_name} intermediate MAE {:.6} ({source})", report.mae);
            }
            Metric::Permsens => {
                let report = permutation_sensitivity(&model, split, args.k, args.seed)?;
                let rows: Vec<[String; 3]> = report
                    .mse
                    .iter()
                    .enumerate()
                    .map(|(j, m)| [j.to_string(), args.seed.wrapping_add(j as u64).to_string(), m.to_string()])
                    .collect();
                write_file(&args.out.join("permsens.csv"), to_csv(&["pass", "seed", "mse"], &rows))?;
                let s = report.summary;
                println!(
                    "{name} {split_name} MSE over {} permutations: mean {:.6}, stdev {:.6}, relative spread {:.3e}",
                    s.n,
                    s.mean,
                    s.stdev,
                    report.spread()
                );
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RunManifest {
    config: RunConfig,
}

fn parse_metrics(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = read_text(path, "metrics")?;
    let bad = |line: usize| CliError::usage(format!("{}:{line}: malformed metrics row", path.display()));
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(bad(i + 1));
            }
            Ok(MetricsRecord {
                epoch: cells[0].parse().map_err(|_| bad(i + 1))?,
                split: cells[1].parse().map_err(|_| bad(i + 1))?,
                mse: cells[2].parse().map_err(|_| bad(i + 1))?,
                penalty: cells[3].parse().map_err(|_| bad(i + 1))?,
                seconds: 0.0,
            })
        })
        .collect()
}

/// Writes `report.csv` (one row per run) and `curves.csv` (every metrics
/// row, tagged with its run) and prints a table.
pub fn report(runs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut summary = Vec::new();
    let mut curves = Vec::new();
    let mut table = String::from("| run | model | seed | epochs | train MSE | val MSE | best val MSE | best epoch |\n|---|---|---|---|---|---|---|---|\n");
    for dir in runs {
        let manifest: RunManifest = parse_json(&dir.join(MANIFEST_FILE), "run manifest")?;
        let history = parse_metrics(&dir.join("metrics.csv"))?;
        let run = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let last = |split| history.iter().rev().find(|r| r.split == split).map(|r| r.mse);
        let best = history
            .iter()
            .filter(|r| r.split == SplitName::Val)
            .min_by(|a, b| a.mse.total_cmp(&b.mse));
        let (Some(train), Some(val), Some(best)) = (last(SplitName::Train), last(SplitName::Val), best) else {
            return Err(CliError::usage(format!("{}: metrics hold no train and val rows", dir.display())));
        };
        let cfg = &manifest.config;
        let epochs = history.iter().map(|r| r.epoch).max().unwrap_or(0);
        summary.push([
            run.clone(),
            cfg.model.name(),
            cfg.seed.to_string(),
            epochs.to_string(),
            train.to_string(),
            val.to_string(),
            best.mse.to_string(),
            best.epoch.to_string(),
        ]);
        let _ = writeln!(
            table,
            "| {run} | {} | {} | {epochs} | {train:.4} | {val:.4} | {:.4} | {} |",
            cfg.model.name(),
            cfg.seed,
            best.mse,
            best.epoch
        );
        for r in &history {
            curves.push([run.clone(), r.epoch.to_string(), r.split.to_string(), r.mse.to_string(), r.penalty.to_string()]);
        }
    }
    create_dir(out)?;
    write_file(
        &out.join("report.csv"),
        to_csv(
            &["run", "model", "seed", "epochs", "final_train_mse", "final_val_mse", "best_val_mse", "best_epoch"],
            &summary,
        ),
    )?;
    write_file(&out.join("curves.csv"), to_csv(&["run", "epoch", "split", "mse", "penalty"], &curves))?;
    print!("{table}");
    Ok(())
}
