//! Deterministic mini-batch training with Adam and an optional squared-hinge
//! penalty on intermediate results.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AdamState, Tape, Tensor, TensorError, Var};
use crate::data::{load_dataset, DataError, Dataset, Split, SplitName};
use crate::eval::{self, EvalError};
use crate::models::{ForwardOutput, Model, ModelError, ModelSpec};
use crate::stats::Summary;

fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    1000
}
fn default_threshold() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// One training run, as read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding a saved dataset.
    pub dataset: PathBuf,
    pub model: ModelSpec,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub reg_lambda: f64,
    #[serde(default = "default_threshold")]
    pub reg_threshold: f64,
    #[serde(default = "yes")]
    pub shuffle_instances_per_epoch: bool,
}

impl RunConfig {
    /// Desk-scale defaults: learning rate 0.001, batches of 200, 50 epochs.
    pub fn desk(dataset: impl Into<PathBuf>, model: ModelSpec, seed: u64) -> Self {
        Self {
            dataset: dataset.into(),
            model,
            lr: default_lr(),
            batch_size: 200,
            epochs: 50,
            seed,
            reg_lambda: 0.0,
            reg_threshold: default_threshold(),
            shuffle_instances_per_epoch: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(TrainError::Config(format!(
                "reg_lambda must be a finite value >= 0, got {}",
                self.reg_lambda
            )));
        }
        if self.reg_lambda > 0.0 && !self.model.capacity {
            return Err(TrainError::Config(format!(
                "reg_lambda > 0 penalizes intermediate results, but {} has none; use a capacity model",
                self.model.name()
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !self.reg_threshold.is_finite() {
            return Err(TrainError::Config("reg_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Measurements of one split after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: SplitName,
    pub mse: f64,
    /// Mean over bags of `sum_i max(0, v_i - threshold)^2`.
    pub penalty: f64,
    /// Wall time of the epoch (train rows) or of the evaluation (val rows).
    pub seconds: f64,
}

/// Loss terms of one mini-batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchStats {
    /// The optimized objective, `mse + lambda * penalty`.
    pub loss: f64,
    pub mse: f64,
    pub penalty: f64,
}

/// `sum_i max(0, v_i - threshold)^2`.
pub fn hinge_penalty(intermediates: &[f64], threshold: f64) -> f64 {
    intermediates
        .iter()
        .map(|&v| (v - threshold).max(0.0).powi(2))
        .sum()
}

/// Per-bag objective: squared error plus `lambda` times the hinge penalty.
pub fn compute_loss(output: &ForwardOutput, label: f64, lambda: f64, threshold: f64) -> f64 {
    let err = output.prediction - label;
    err * err + lambda * hinge_penalty(&output.intermediates, threshold)
}

const STREAM_ORDER: u64 = 1 << 62;
const STREAM_INSTANCES: u64 = 2 << 62;

fn epoch_rng(seed: u64, domain: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain | epoch as u64);
    rng
}

/// Owns the model and optimizer state of one run.
pub struct Trainer {
    config: RunConfig,
    model: Model,
    adam: AdamState,
    epoch: usize,
    history: Vec<MetricsRecord>,
}

impl Trainer {
    pub fn new(config: RunConfig, input_dim: usize) -> Result<Self, TrainError> {
        config.validate()?;
        if config.model.input_dim != input_dim {
            return Err(TrainError::Config(format!(
                "model expects {} input features, the dataset has {input_dim}",
                config.model.input_dim
            )));
        }
        let model = Model::init(config.model.clone(), config.seed)?;
        let adam = AdamState::new(config.lr);
        Ok(Self {
            config,
            model,
            adam,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn history(&self) -> &[MetricsRecord] {
        &self.history
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One Adam update on a mini-batch of bags.
    pub fn step(&mut self, bags: &[Vec<&[f64]>], labels: &[f64]) -> Result<BatchStats, TrainError> {
        assert_eq!(bags.len(), labels.len(), "one label per bag");
        if bags.is_empty() {
            return Err(TrainError::Config("empty mini-batch".into()));
        }
        let total = bags.len() as f64;
        let (lambda, tau) = (self.config.reg_lambda, self.config.reg_threshold);

        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, b) in bags.iter().enumerate() {
            groups.entry(b.len()).or_default().push(i);
        }

        let mut tape = Tape::new();
        let mut terms: Vec<Var> = Vec::new();
        let (mut sse, mut penalty_sum) = (0.0, 0.0);
        for (len, idx) in groups {
            if len == 0 {
                // Capacity models predict 0 on an empty bag and have no
                // parameters in play; others reject it.
                let out = self.model.forward(&[])?;
                for &i in &idx {
                    sse += (out.prediction - labels[i]).powi(2);
                }
                continue;
            }
            let group: Vec<&[&[f64]]> = idx.iter().map(|&i| bags[i].as_slice()).collect();
            let out = self.model.forward_tape(&mut tape, &group)?;
            let target = tape.constant(Tensor::vector(idx.iter().map(|&i| labels[i]).collect()));
            let mse = tape.mse_loss(out.prediction, target)?;
            sse += tape.value(mse).data()[0] * idx.len() as f64;
            terms.push(tape.scale(mse, idx.len() as f64 / total));
            if let Some(nu) = out.intermediates {
                let shifted = tape.add_scalar(nu, -tau);
                let hinge = tape.activation(Activation::Relu, shifted);
                let sq = tape.mul(hinge, hinge)?;
                let sum = tape.reduce_sum(sq, None)?;
                penalty_sum += tape.value(sum).data()[0];
                if lambda > 0.0 {
                    terms.push(tape.scale(sum, lambda / total));
                }
            }
        }

        let stats = BatchStats {
            loss: 0.0,
            mse: sse / total,
            penalty: penalty_sum / total,
        };
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(BatchStats {
                loss: stats.mse + lambda * stats.penalty,
                ..stats
            });
        };
        let mut loss = first;
        for &t in rest {
            loss = tape.add(loss, t)?;
        }
        let loss_value = tape.value(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.epoch + 1,
                batch: 0,
            });
        }
        let grads = tape.backward(loss)?;
        if !grads.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.epoch + 1,
                batch: 0,
            });
        }
        self.adam.step(self.model.params_mut(), &grads)?;
        Ok(BatchStats {
            loss: loss_value,
            ..stats
        })
    }

    /// Runs one epoch over `train` and evaluates `val` if given. Returns the
    /// records appended to the history.
    pub fn run_epoch(&mut self, train: &Split, val: Option<&Split>) -> Result<&[MetricsRecord], TrainError> {
        if self.config.batch_size > train.len() {
            return Err(TrainError::Config(format!(
                "batch_size {} exceeds the {} training bags",
                self.config.batch_size,
                train.len()
            )));
        }
        let start = Instant::now();
        let epoch = self.epoch;
        let seed = self.config.seed;

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(seed, STREAM_ORDER, epoch));
        let mut inst_rng = epoch_rng(seed, STREAM_INSTANCES, epoch);
        let features: Vec<Vec<&[f64]>> = train
            .bags
            .iter()
            .map(|bag| {
                let mut f = train.bag_features(bag);
                if self.config.shuffle_instances_per_epoch {
                    f.shuffle(&mut inst_rng);
                }
                f
            })
            .collect();

        let (mut sse, mut pen) = (0.0, 0.0);
        for (batch_id, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let bags: Vec<Vec<&[f64]>> = chunk.iter().map(|&i| features[i].clone()).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train.bags[i].target()).collect();
            let stats = self.step(&bags, &labels).map_err(|e| match e {
                TrainError::NonFinite { epoch, .. } => TrainError::NonFinite { epoch, batch: batch_id },
                other => other,
            })?;
            sse += stats.mse * chunk.len() as f64;
            pen += stats.penalty * chunk.len() as f64;
        }
        let n = train.len() as f64;
        let first = self.history.len();
        self.epoch += 1;
        self.history.push(MetricsRecord {
            epoch: self.epoch,
            split: SplitName::Train,
            mse: sse / n,
            penalty: pen / n,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(val) = val {
            let start = Instant::now();
            let (mse, penalty) = self.evaluate(val)?;
            self.history.push(MetricsRecord {
                epoch: self.epoch,
                split: val.name,
                mse,
                penalty,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Ok(&self.history[first..])
    }

    /// MSE and mean hinge penalty on a split, instances in stored order.
    pub fn evaluate(&self, split: &Split) -> Result<(f64, f64), TrainError> {
        let outputs = eval::predict_split(&self.model, split)?;
        let n = split.len() as f64;
        let mut sse = 0.0;
        let mut pen = 0.0;
        for (o, bag) in outputs.iter().zip(&split.bags) {
            sse += (o.prediction - bag.target()).powi(2);
            pen += hinge_penalty(&o.intermediates, self.config.reg_threshold);
        }
        Ok((sse / n, pen / n))
    }
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: Model,
    pub history: Vec<MetricsRecord>,
    pub val_mse: f64,
    pub test_mse: Option<f64>,
}

/// Trains on an in-memory dataset for `config.epochs` epochs, logging train
/// and val metrics every epoch, then scores the test split if it has bags.
pub fn train_on(dataset: &Dataset, config: &RunConfig) -> Result<RunOutcome, TrainError> {
    let mut trainer = Trainer::new(config.clone(), dataset.feature_dim())?;
    let val = (!dataset.val.is_empty()).then_some(&dataset.val);
    for _ in 0..config.epochs {
        trainer.run_epoch(&dataset.train, val)?;
    }
    let val_mse = match val {
        Some(v) => trainer.evaluate(v)?.0,
        None => f64::NAN,
    };
    let test_mse = if dataset.test.is_empty() {
        None
    } else {
        Some(trainer.evaluate(&dataset.test)?.0)
    };
    let history = trainer.history.clone();
    Ok(RunOutcome {
        model: trainer.into_model(),
        history,
        val_mse,
        test_mse,
    })
}

/// Loads the dataset named by `config` and trains on it.
pub fn train_run(config: &RunConfig) -> Result<RunOutcome, TrainError> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset)?;
    train_on(&dataset, config)
}

/// Per-seed outcomes of repeated runs and their aggregates.
#[derive(Clone, Debug)]
pub struct MultiSeed {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
    pub val: Summary,
    pub test: Option<Summary>,
}

/// Repeats `config` once per seed on the same dataset.
pub fn multi_seed(dataset: &Dataset, config: &RunConfig, seeds: &[u64]) -> Result<MultiSeed, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("multi_seed needs at least one seed".into()));
    }
    let runs = seeds
        .iter()
        .map(|&seed| {
            let cfg = RunConfig { seed, ..config.clone() };
            train_on(dataset, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(seeds.to_vec(), runs))
}

/// Aggregates already finished runs.
pub fn aggregate(seeds: Vec<u64>, runs: Vec<RunOutcome>) -> MultiSeed {
    let val = Summary::of(&runs.iter().map(|r| r.val_mse).collect::<Vec<_>>());
    let test: Option<Vec<f64>> = runs.iter().map(|r| r.test_mse).collect();
    MultiSeed {
        seeds,
        val,
        test: test.map(|t| Summary::of(&t)),
        runs,
    }
}

/// Metrics history as CSV with header `epoch,split,mse,penalty`.
///
/// Wall time is left out so that reruns produce identical bytes; see
/// [`timing_csv`].
pub fn metrics_csv(history: &[MetricsRecord]) -> String {
    let mut out = String::from("epoch,split,mse,penalty\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.split, r.mse, r.penalty);
    }
    out
}

/// Wall times as CSV with header `epoch,split,seconds`.
pub fn timing_csv(history: &[MetricsRecord]) -> String {
    let mut out = String::from("epoch,split,seconds\n");
    for r in history {
        let _ = writeln!(out, "{},{},{:.6}", r.epoch, r.split, r.seconds);
    }
    out
}
