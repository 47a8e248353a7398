//! Browser demo: decompose a bag by hand, look at label distributions, and
//! train a small capacity network in the page.
//!
//! The logic lives in plain functions returning `Result<_, String>` so it
//! runs and is tested natively; the `#[wasm_bindgen]` items only convert
//! errors to `JsError`.

use capnet::data::{generate_dataset, Dataset, DatasetSpec, Split};
use capnet::eval::evaluate_mse;
use capnet::oracle::{decompose, eval_task, sample_pair_set, ClassMultiset, OrderedSequence};
use capnet::stats::Summary;
use capnet::train::{RunConfig, Trainer};
use capnet::{Family, ModelSpec, TaskKind, TaskSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn task_kind(name: &str) -> Result<TaskKind, String> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| format!("unknown task {name:?}; use US, WTri, USS, UC, TriC or Mult"))
}

fn task_spec(name: &str) -> Result<TaskSpec, String> {
    let kind = task_kind(name)?;
    match kind {
        // A fixed pair set keeps the demo's synergy bonuses stable.
        TaskKind::UniqueSumSynergy => TaskSpec::with_pairs(kind, sample_pair_set(0, 5).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string()),
        _ => Ok(TaskSpec::new(kind)),
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Decomposition {
    pub label: u64,
    pub added: Vec<u64>,
    /// Synergy pairs in effect (USS only).
    pub pairs: Vec<[u8; 2]>,
}

pub fn decompose_bag(task: &str, classes: &[u8]) -> Result<Decomposition, String> {
    let spec = task_spec(task)?;
    let added = decompose(&spec, &OrderedSequence::new(classes.to_vec())).map_err(|e| e.to_string())?;
    let bag = ClassMultiset::from_classes(classes).map_err(|e| e.to_string())?;
    let label = eval_task(&spec, &bag).map_err(|e| e.to_string())?;
    Ok(Decomposition {
        label,
        added,
        pairs: spec.pair_set,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Histogram {
    /// Distinct labels in increasing order.
    pub labels: Vec<u64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub stdev: f64,
}

pub fn histogram(task: &str, set_size: usize, bags: usize, seed: u64) -> Result<Histogram, String> {
    if bags == 0 || bags > 200_000 {
        return Err("bag count must be between 1 and 200000".into());
    }
    let data = generate_dataset(&DatasetSpec::symbolic(task_kind(task)?, set_size, (bags, 1, 1), seed), None)
        .map_err(|e| e.to_string())?;
    let mut counts = std::collections::BTreeMap::new();
    for bag in &data.train.bags {
        *counts.entry(bag.label).or_insert(0usize) += 1;
    }
    let s = data.train.label_summary();
    Ok(Histogram {
        labels: counts.keys().copied().collect(),
        counts: counts.values().copied().collect(),
        mean: s.mean,
        stdev: s.stdev,
    })
}

#[derive(Debug, Serialize)]
pub struct Explanation {
    pub label: u64,
    pub prediction: f64,
    pub expected: Vec<u64>,
    /// Per-instance values: the model's own for capacity models, prefix
    /// differences otherwise.
    pub predicted: Vec<f64>,
    pub pseudo: bool,
}

/// A small in-page training run on a symbolic dataset.
pub struct Session {
    data: Dataset,
    trainer: Trainer,
    batch: usize,
    epoch: usize,
    seed: u64,
}

impl Session {
    pub fn new(task: &str, family: &str, capacity: bool, seed: u64) -> Result<Self, String> {
        let family: Family =
            serde_json::from_value(serde_json::Value::String(family.to_string())).map_err(|_| {
                format!("unknown family {family:?}; use DeepSet, Attention, RNN, LSTM or GRU")
            })?;
        let data = generate_dataset(&DatasetSpec::symbolic(task_kind(task)?, 5, (2_000, 300, 1), seed), None)
            .map_err(|e| e.to_string())?;
        let model = ModelSpec {
            enc_layers: 2,
            dec_layers: 2,
            ..ModelSpec::new(family, capacity).with_dims(data.feature_dim(), 32, 16)
        };
        let config = RunConfig {
            lr: 0.003,
            ..RunConfig::desk("in-memory", model, seed)
        };
        let batch = config.batch_size / 4;
        let trainer = Trainer::new(config, data.feature_dim()).map_err(|e| e.to_string())?;
        Ok(Self {
            data,
            trainer,
            batch,
            epoch: 0,
            seed,
        })
    }

    /// One pass over the training bags in a fresh order. Returns the
    /// validation MSE.
    pub fn epoch(&mut self) -> Result<f64, String> {
        let train: &Split = &self.data.train;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(self.batch) {
            let bags: Vec<Vec<&[f64]>> = chunk
                .iter()
                .map(|&i| {
                    let mut f = train.bag_features(&train.bags[i]);
                    f.shuffle(&mut rng);
                    f
                })
                .collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train.bags[i].target()).collect();
            self.trainer.step(&bags, &labels).map_err(|e| e.to_string())?;
        }
        self.epoch += 1;
        self.val_mse()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn val_mse(&self) -> Result<f64, String> {
        evaluate_mse(self.trainer.model(), &self.data.val).map_err(|e| e.to_string())
    }

    /// Label spread of the validation split: the MSE of always predicting
    /// the mean.
    pub fn baseline_mse(&self) -> f64 {
        let s: Summary = self.data.val.label_summary();
        s.variance * (s.n - 1) as f64 / s.n as f64
    }

    pub fn explain(&self, classes: &[u8]) -> Result<Explanation, String> {
        if classes.is_empty() {
            return Err("enter at least one class".into());
        }
        let task = &self.data.task;
        let (lo, hi) = task.class_range;
        if let Some(c) = classes.iter().find(|&&c| c < lo || c > hi) {
            return Err(format!("class {c} is outside {lo}..={hi}"));
        }
        let split = Split::symbolic(capnet::data::SplitName::Val, task, &[classes.to_vec()]).map_err(|e| e.to_string())?;
        let bag = &split.bags[0];
        let features = split.bag_features(bag);
        let model = self.trainer.model();
        let out = model.forward(&features).map_err(|e| e.to_string())?;
        let pseudo = !model.spec().capacity;
        let predicted = if pseudo {
            capnet::eval::pseudo_intermediates(model, &features).map_err(|e| e.to_string())?
        } else {
            out.intermediates.clone()
        };
        Ok(Explanation {
            label: bag.label,
            prediction: out.prediction,
            expected: decompose(task, &bag.sequence()).map_err(|e| e.to_string())?,
            predicted,
            pseudo,
        })
    }
}

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("plain data serializes"))
        .map_err(|e| JsError::new(&e))
}

/// JSON `{label, added, pairs}` for a class sequence.
#[wasm_bindgen(js_name = decompose)]
pub fn decompose_js(task: &str, classes: &[u8]) -> Result<String, JsError> {
    js(decompose_bag(task, classes))
}

/// JSON `{labels, counts, mean, stdev}` over freshly generated bags.
#[wasm_bindgen(js_name = labelHistogram)]
pub fn label_histogram_js(task: &str, set_size: usize, bags: usize, seed: u64) -> Result<String, JsError> {
    js(histogram(task, set_size, bags, seed))
}

#[wasm_bindgen]
pub struct DemoTrainer(Session);

#[wasm_bindgen]
impl DemoTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str, family: &str, capacity: bool, seed: u64) -> Result<DemoTrainer, JsError> {
        Session::new(task, family, capacity, seed).map(DemoTrainer).map_err(|e| JsError::new(&e))
    }

    /// Trains one epoch and returns the validation MSE.
    pub fn epoch(&mut self) -> Result<f64, JsError> {
        self.0.epoch().map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = epochsDone)]
    pub fn epochs_done(&self) -> usize {
        self.0.epochs_done()
    }

    #[wasm_bindgen(js_name = baselineMse)]
    pub fn baseline_mse(&self) -> f64 {
        self.0.baseline_mse()
    }

    /// JSON `{label, prediction, expected, predicted, pseudo}` for a bag.
    pub fn explain(&self, classes: &[u8]) -> Result<String, JsError> {
        js(self.0.explain(classes))
    }
}
