//! Grid sweeps: variants (training-set size, set size, learning rate) x
//! model families x capacity flag x seeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use capnet::data::{generate_dataset, Dataset, DatasetSpec, SetSize};
use capnet::eval::to_csv;
use capnet::stats::Summary;
use capnet::train::{train_on, RunConfig};
use capnet::{Family, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{create_dir, parse_json, write_file, CliError};
use crate::manifest::ExperimentManifest;

fn both() -> Vec<bool> {
    vec![false, true]
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    200
}
fn default_epochs() -> usize {
    50
}
fn default_threshold() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetSpec,
    /// Layer widths shared by every cell; `family`, `capacity` and
    /// `input_dim` are set per cell.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub families: Vec<Family>,
    /// Capacity flags to try; ignored for set families, which have none.
    #[serde(default = "both")]
    pub capacity: Vec<bool>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub set_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub learning_rates: Option<Vec<f64>>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Applied to capacity cells only.
    #[serde(default)]
    pub reg_lambda: f64,
    #[serde(default = "default_threshold")]
    pub reg_threshold: f64,
    #[serde(default = "yes")]
    pub shuffle_instances_per_epoch: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct Variant {
    train_size: usize,
    set_size: Option<usize>,
    lr: f64,
}

impl Variant {
    fn data_key(&self) -> (usize, Option<usize>) {
        (self.train_size, self.set_size)
    }
}

struct Cell {
    variant: usize,
    family: Family,
    capacity: bool,
}

fn set_size_label(cfg: &SweepConfig, v: &Variant) -> String {
    match (v.set_size, &cfg.dataset.set_size) {
        (Some(n), _) | (None, &SetSize::Fixed(n)) => n.to_string(),
        (None, SetSize::Range { min, max }) => format!("{min}-{max}"),
        (None, SetSize::Choice(c)) => c.iter().map(usize::to_string).collect::<Vec<_>>().join("|"),
    }
}

fn validate(cfg: &SweepConfig) -> Result<(), CliError> {
    if cfg.families.is_empty() || cfg.seeds.is_empty() || cfg.capacity.is_empty() {
        return Err(CliError::usage("sweep needs at least one family, capacity flag and seed"));
    }
    for list in [&cfg.train_sizes, &cfg.set_sizes] {
        if list.as_ref().is_some_and(|l| l.is_empty() || l.contains(&0)) {
            return Err(CliError::usage("sweep sizes must be non-empty lists of positive numbers"));
        }
    }
    if cfg.learning_rates.as_ref().is_some_and(Vec::is_empty) {
        return Err(CliError::usage("learning_rates must not be empty"));
    }
    cfg.dataset.validate()?;
    Ok(())
}

fn variants(cfg: &SweepConfig) -> Vec<Variant> {
    let trains = cfg.train_sizes.clone().unwrap_or_else(|| vec![cfg.dataset.counts.train]);
    let sets: Vec<Option<usize>> = match &cfg.set_sizes {
        Some(s) => s.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let lrs = cfg.learning_rates.clone().unwrap_or_else(|| vec![cfg.lr]);
    let mut out = Vec::new();
    for &train_size in &trains {
        for &set_size in &sets {
            for &lr in &lrs {
                out.push(Variant { train_size, set_size, lr });
            }
        }
    }
    out
}

fn cells(cfg: &SweepConfig, n_variants: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    for variant in 0..n_variants {
        for &family in &cfg.families {
            for &capacity in &cfg.capacity {
                if capacity && !family.is_sequential() {
                    continue;
                }
                out.push(Cell { variant, family, capacity });
            }
        }
    }
    out
}

fn run_config(cfg: &SweepConfig, v: &Variant, cell: &Cell, input_dim: usize, seed: u64) -> RunConfig {
    let template = cfg.model.clone().unwrap_or_else(|| ModelSpec::new(cell.family, cell.capacity));
    RunConfig {
        dataset: "in-memory".into(),
        model: ModelSpec {
            family: cell.family,
            capacity: cell.capacity,
            input_dim,
            ..template
        },
        lr: v.lr,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed,
        reg_lambda: if cell.capacity { cfg.reg_lambda } else { 0.0 },
        reg_threshold: cfg.reg_threshold,
        shuffle_instances_per_epoch: cfg.shuffle_instances_per_epoch,
    }
}

/// Val and test MSE of one (cell, seed) job.
type JobResult = Result<(f64, f64), CliError>;

pub fn run(config: &Path, out: &Path, jobs: usize) -> Result<(), CliError> {
    let cfg: SweepConfig = parse_json(config, "sweep config")?;
    validate(&cfg)?;
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let variants = variants(&cfg);
    let cells = cells(&cfg, variants.len());

    let mut datasets: BTreeMap<(usize, Option<usize>), Dataset> = BTreeMap::new();
    for v in &variants {
        if datasets.contains_key(&v.data_key()) {
            continue;
        }
        let mut spec = cfg.dataset.clone();
        spec.counts.train = v.train_size;
        if let Some(n) = v.set_size {
            spec.set_size = SetSize::Fixed(n);
        }
        datasets.insert(v.data_key(), generate_dataset(&spec, None)?);
    }

    // Validate every run config before spending time on training.
    let n_seeds = cfg.seeds.len();
    let cfg_ref = &cfg;
    let job_configs: Vec<RunConfig> = cells
        .iter()
        .flat_map(|cell| {
            let v = &variants[cell.variant];
            let dim = datasets[&v.data_key()].feature_dim();
            cfg_ref.seeds.iter().map(move |&s| run_config(cfg_ref, v, cell, dim, s))
        })
        .collect();
    for rc in &job_configs {
        rc.validate()?;
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<JobResult>>> = Mutex::new((0..job_configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(job_configs.len()) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(rc) = job_configs.get(j) else { break };
                let cell = &cells[j / n_seeds];
                let data = &datasets[&variants[cell.variant].data_key()];
                let res = train_on(data, rc)
                    .map(|o| (o.val_mse, o.test_mse.unwrap_or(f64::NAN)))
                    .map_err(CliError::from);
                if let Ok((val, _)) = &res {
                    eprintln!("{} seed {}: val MSE {val:.6}", rc.model.name(), rc.seed);
                }
                results.lock().expect("no worker panicked")[j] = Some(res);
            });
        }
    });
    let results: Vec<(f64, f64)> = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<_, _>>()?;

    let mut raw = Vec::new();
    let mut table = Vec::new();
    let mut medians: BTreeMap<(usize, Family, bool), (f64, f64)> = BTreeMap::new();
    for (c, cell) in cells.iter().enumerate() {
        let v = &variants[cell.variant];
        let key = [v.train_size.to_string(), set_size_label(&cfg, v), v.lr.to_string()];
        let name = ModelSpec::new(cell.family, cell.capacity).name();
        let rows = &results[c * n_seeds..(c + 1) * n_seeds];
        for (&seed, (val, test)) in cfg.seeds.iter().zip(rows) {
            let mut row = key.to_vec();
            row.extend([
                name.clone(),
                cell.family.to_string(),
                u8::from(cell.capacity).to_string(),
                seed.to_string(),
                val.to_string(),
                test.to_string(),
            ]);
            raw.push(row);
        }
        let val = Summary::of(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let test = Summary::of(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        medians.insert((cell.variant, cell.family, cell.capacity), (val.median, test.median));
        let mut row = key.to_vec();
        row.extend([name, cell.family.to_string(), u8::from(cell.capacity).to_string(), n_seeds.to_string()]);
        for s in [val, test] {
            row.extend([s.mean.to_string(), s.median.to_string(), s.stdev.to_string()]);
        }
        table.push(row);
    }

    let mut comparison = Vec::new();
    for (vi, v) in variants.iter().enumerate() {
        for &family in &cfg.families {
            let (Some(base), Some(cap)) = (medians.get(&(vi, family, false)), medians.get(&(vi, family, true))) else {
                continue;
            };
            comparison.push(vec![
                v.train_size.to_string(),
                set_size_label(&cfg, v),
                v.lr.to_string(),
                family.to_string(),
                base.0.to_string(),
                cap.0.to_string(),
                (cap.0 - base.0).to_string(),
                base.1.to_string(),
                cap.1.to_string(),
                (cap.1 - base.1).to_string(),
            ]);
        }
    }

    create_dir(out)?;
    let key_cols = ["train_size", "set_size", "lr"];
    let cols = |extra: &[&'static str]| -> Vec<&'static str> { key_cols.iter().chain(extra).copied().collect() };
    write_file(
        &out.join("raw.csv"),
        to_csv(&cols(&["model", "family", "capacity", "seed", "val_mse", "test_mse"]), &raw),
    )?;
    write_file(
        &out.join("sweep.csv"),
        to_csv(
            &cols(&[
                "model", "family", "capacity", "n_seeds", "val_mean", "val_median", "val_stdev", "test_mean",
                "test_median", "test_stdev",
            ]),
            &table,
        ),
    )?;
    write_file(
        &out.join("comparison.csv"),
        to_csv(
            &cols(&[
                "family",
                "baseline_val_median",
                "capacity_val_median",
                "delta_val_median",
                "baseline_test_median",
                "capacity_test_median",
                "delta_test_median",
            ]),
            &comparison,
        ),
    )?;
    let outputs = ["raw.csv", "sweep.csv", "comparison.csv"].map(String::from).to_vec();
    ExperimentManifest::new(&cfg, cfg.seeds.clone(), None, outputs).write(out)?;

    for row in &table {
        println!("{}", row.join(","));
    }
    Ok(())
}
