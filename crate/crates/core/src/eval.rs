//! Measurements on trained models: MSE, intermediate-result error against
//! the oracle, permutation sensitivity, rounded accuracy and set-size sweeps.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, Bag, DataError, DatasetSpec, SetSize, Split};
use crate::models::{ForwardOutput, Model, ModelError};
use crate::oracle::{decompose, OracleError, TaskSpec};
use crate::stats::Summary;
use crate::train::{train_on, RunConfig, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("split has no bags")]
    EmptySplit,
    #[error("{0} emits no intermediate results; use pseudo-intermediates")]
    NotCapacity(String),
    #[error("{0} is a capacity model; read its intermediates directly")]
    IsCapacity(String),
    #[error("need at least 2 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("set sizes must be >= 1")]
    BadSize,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training failed: {0}")]
    Train(Box<TrainError>),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(Box::new(e))
    }
}

/// Anything that maps bags of feature vectors to predictions.
pub trait Predictor {
    fn name(&self) -> String;

    /// True if [`ForwardOutput::intermediates`] carries per-instance values.
    fn is_capacity(&self) -> bool;

    fn predict(&self, bags: &[Vec<&[f64]>]) -> Result<Vec<ForwardOutput>, ModelError>;

    /// Prediction on every non-empty prefix of `bag`.
    fn prefix_predictions(&self, bag: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        let prefixes: Vec<Vec<&[f64]>> = (1..=bag.len()).map(|k| bag[..k].to_vec()).collect();
        Ok(self.predict(&prefixes)?.into_iter().map(|o| o.prediction).collect())
    }
}

impl Predictor for Model {
    fn name(&self) -> String {
        self.spec().name()
    }

    fn is_capacity(&self) -> bool {
        self.spec().capacity
    }

    fn predict(&self, bags: &[Vec<&[f64]>]) -> Result<Vec<ForwardOutput>, ModelError> {
        self.forward_batch(bags)
    }

    fn prefix_predictions(&self, bag: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        Model::prefix_predictions(self, bag)
    }
}

const CHUNK: usize = 1000;

fn predict_bags<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    bags: &[Bag],
) -> Result<Vec<ForwardOutput>, ModelError> {
    let mut out = Vec::with_capacity(bags.len());
    for chunk in bags.chunks(CHUNK) {
        let feats: Vec<Vec<&[f64]>> = chunk.iter().map(|b| split.bag_features(b)).collect();
        out.extend(model.predict(&feats)?);
    }
    Ok(out)
}

/// Runs `model` on every bag of `split`, instances in stored order.
pub fn predict_split<P: Predictor + ?Sized>(model: &P, split: &Split) -> Result<Vec<ForwardOutput>, ModelError> {
    predict_bags(model, split, &split.bags)
}

fn mse_of(outputs: &[ForwardOutput], bags: &[Bag]) -> f64 {
    let sse: f64 = outputs
        .iter()
        .zip(bags)
        .map(|(o, b)| (o.prediction - b.target()).powi(2))
        .sum();
    sse / bags.len() as f64
}

/// Mean squared error over the bags of `split`.
pub fn evaluate_mse<P: Predictor + ?Sized>(model: &P, split: &Split) -> Result<f64, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    Ok(mse_of(&predict_split(model, split)?, &split.bags))
}

/// Error of predicting the mean training label everywhere.
pub fn predict_mean_mse(train: &Split, eval: &Split) -> Result<f64, EvalError> {
    if train.is_empty() || eval.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let mean = train.labels().iter().sum::<f64>() / train.len() as f64;
    Ok(eval.labels().iter().map(|y| (y - mean).powi(2)).sum::<f64>() / eval.len() as f64)
}

/// Expected and predicted intermediates of one bag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagIntermediates {
    pub classes: Vec<u8>,
    pub expected: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl BagIntermediates {
    pub fn deltas(&self) -> Vec<f64> {
        self.expected
            .iter()
            .zip(&self.predicted)
            .map(|(e, p)| (e - p).abs())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntermediateReport {
    /// True when the values come from prefix differences of a
    /// non-capacity model.
    pub pseudo: bool,
    pub bags: Vec<BagIntermediates>,
    /// Mean of all per-instance absolute deviations.
    pub mae: f64,
}

impl IntermediateReport {
    fn new(pseudo: bool, bags: Vec<BagIntermediates>) -> Self {
        let (sum, count) = bags.iter().fold((0.0, 0usize), |(s, c), b| {
            (s + b.deltas().iter().sum::<f64>(), c + b.expected.len())
        });
        let mae = if count == 0 { 0.0 } else { sum / count as f64 };
        Self { pseudo, bags, mae }
    }

    /// One JSON object per bag: `{"classes":..,"expected":..,"predicted":..}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.bags {
            out.push_str(&serde_json::to_string(b).expect("plain data serializes"));
            out.push('\n');
        }
        out
    }
}

fn expected_of(task: &TaskSpec, bag: &Bag) -> Result<Vec<f64>, EvalError> {
    Ok(decompose(task, &bag.sequence())?.into_iter().map(|v| v as f64).collect())
}

/// Compares a capacity model's intermediates with the exact decomposition
/// under each bag's stored order.
pub fn intermediate_mae<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    task: &TaskSpec,
) -> Result<IntermediateReport, EvalError> {
    if !model.is_capacity() {
        return Err(EvalError::NotCapacity(model.name()));
    }
    let outputs = predict_split(model, split)?;
    let bags = outputs
        .into_iter()
        .zip(&split.bags)
        .map(|(o, bag)| {
            Ok(BagIntermediates {
                classes: bag.classes(),
                expected: expected_of(task, bag)?,
                predicted: o.intermediates,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(IntermediateReport::new(false, bags))
}

/// Prefix differences `f(x_1..x_i) - f(x_1..x_{i-1})` of a non-capacity
/// model, with `f(empty) = 0`.
pub fn pseudo_intermediates<P: Predictor + ?Sized>(
    model: &P,
    bag: &[&[f64]],
) -> Result<Vec<f64>, EvalError> {
    if model.is_capacity() {
        return Err(EvalError::IsCapacity(model.name()));
    }
    if bag.is_empty() {
        return Err(ModelError::EmptyBag.into());
    }
    let prefixes = model.prefix_predictions(bag)?;
    let mut prev = 0.0;
    Ok(prefixes
        .into_iter()
        .map(|p| {
            let d = p - prev;
            prev = p;
            d
        })
        .collect())
}

/// Pseudo-intermediates of every bag against the exact decomposition.
pub fn pseudo_intermediate_mae<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    task: &TaskSpec,
) -> Result<IntermediateReport, EvalError> {
    let bags = split
        .bags
        .iter()
        .map(|bag| {
            Ok(BagIntermediates {
                classes: bag.classes(),
                expected: expected_of(task, bag)?,
                predicted: pseudo_intermediates(model, &split.bag_features(bag))?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(IntermediateReport::new(true, bags))
}

/// Intermediate report for any model: direct for capacity models, prefix
/// differences otherwise.
pub fn intermediates_report<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    task: &TaskSpec,
) -> Result<IntermediateReport, EvalError> {
    if model.is_capacity() {
        intermediate_mae(model, split, task)
    } else {
        pseudo_intermediate_mae(model, split, task)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub mse: Vec<f64>,
    pub summary: Summary,
}

impl PermutationReport {
    /// `(max - min) / max(1, |mean|)` over the passes.
    pub fn spread(&self) -> f64 {
        self.summary.relative_spread()
    }
}

/// Reorders the instances of every bag with a stream keyed by
/// `(seed, bag index)`.
pub fn permute_bags(bags: &[Bag], seed: u64) -> Vec<Bag> {
    bags.iter()
        .enumerate()
        .map(|(i, bag)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut b = bag.clone();
            b.instances.shuffle(&mut rng);
            b
        })
        .collect()
}

/// MSE under `k` fresh instance orders of every bag. Pass `j` uses seed
/// `seed + j`.
pub fn permutation_sensitivity<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    k: usize,
    seed: u64,
) -> Result<PermutationReport, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewPermutations(k));
    }
    let seeds: Vec<u64> = (0..k as u64).map(|j| seed.wrapping_add(j)).collect();
    permutation_sensitivity_with_seeds(model, split, &seeds)
}

/// Like [`permutation_sensitivity`] with one explicit seed per pass.
pub fn permutation_sensitivity_with_seeds<P: Predictor + ?Sized>(
    model: &P,
    split: &Split,
    seeds: &[u64],
) -> Result<PermutationReport, EvalError> {
    if seeds.len() < 2 {
        return Err(EvalError::TooFewPermutations(seeds.len()));
    }
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let mse = seeds
        .iter()
        .map(|&s| {
            let bags = permute_bags(&split.bags, s);
            Ok(mse_of(&predict_bags(model, split, &bags)?, &bags))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let summary = Summary::of(&mse);
    Ok(PermutationReport { mse, summary })
}

/// Fraction of bags whose prediction rounds (half away from zero) to the
/// label.
pub fn rounded_accuracy<P: Predictor + ?Sized>(model: &P, split: &Split) -> Result<f64, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let outputs = predict_split(model, split)?;
    let hits = outputs
        .iter()
        .zip(&split.bags)
        .filter(|(o, b)| o.prediction.round() == b.target())
        .count();
    Ok(hits as f64 / split.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub size: usize,
    pub val_mse: f64,
    pub test_mse: Option<f64>,
}

/// Generates one dataset per set size from `data` and trains `run` on each.
pub fn size_sweep(data: &DatasetSpec, run: &RunConfig, sizes: &[usize]) -> Result<Vec<SizeResult>, EvalError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(EvalError::BadSize);
    }
    sizes
        .iter()
        .map(|&size| {
            let spec = DatasetSpec {
                set_size: SetSize::Fixed(size),
                ..data.clone()
            };
            let dataset = generate_dataset(&spec, None)?;
            let outcome = train_on(&dataset, run)?;
            Ok(SizeResult {
                size,
                val_mse: outcome.val_mse,
                test_mse: outcome.test_mse,
            })
        })
        .collect()
}

/// Renders rows as CSV under `header`. Cells are written with `Display`.
pub fn to_csv<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.as_ref().join(","));
    }
    out
}
