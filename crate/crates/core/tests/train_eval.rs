use capnet::data::{generate_dataset, Dataset, DatasetSpec, SplitName, Split};
use capnet::eval::{
    evaluate_mse, intermediate_mae, intermediates_report, permutation_sensitivity,
    permutation_sensitivity_with_seeds, predict_mean_mse, pseudo_intermediate_mae, pseudo_intermediates,
    rounded_accuracy, size_sweep, EvalError, Predictor,
};
use capnet::models::ModelError;
use capnet::oracle::{decompose, eval_task, ClassMultiset, OrderedSequence};
use capnet::train::{
    compute_loss, hinge_penalty, metrics_csv, multi_seed, train_on, RunConfig, TrainError, Trainer,
};
use capnet::{Family, ForwardOutput, Model, ModelSpec, TaskKind, TaskSpec};

fn small(family: Family, capacity: bool) -> ModelSpec {
    ModelSpec {
        enc_layers: 1,
        dec_layers: 2,
        ..ModelSpec::new(family, capacity).with_dims(10, 8, 8)
    }
}

fn dataset(task: TaskKind, size: usize, train: usize, seed: u64) -> Dataset {
    generate_dataset(&DatasetSpec::symbolic(task, size, (train, 100, 50), seed), None).unwrap()
}

fn config(model: ModelSpec, epochs: usize, batch: usize) -> RunConfig {
    RunConfig {
        epochs,
        batch_size: batch,
        ..RunConfig::desk("unused", model, 7)
    }
}

fn output(prediction: f64, intermediates: Vec<f64>) -> ForwardOutput {
    ForwardOutput {
        prediction,
        intermediates,
        latents: None,
    }
}

#[test]
fn loss_examples() {
    let out = output(3.0, vec![1.5, 0.5, 1.0]);
    // Only 1.5 exceeds the threshold: 2 * 0.5^2 = 0.5.
    assert!((compute_loss(&out, 3.0, 2.0, 1.0) - 0.5).abs() < 1e-15);
    assert_eq!(compute_loss(&out, 1.0, 0.0, 1.0), 4.0);
    assert_eq!(hinge_penalty(&[0.2, 1.0, -3.0], 1.0), 0.0);
    assert!((compute_loss(&out, 5.0, 10.0, 2.0) - 4.0).abs() < 1e-15);
}

#[test]
fn step_loss_is_batch_mean_of_per_bag_losses() {
    let data = dataset(TaskKind::UniqueSum, 4, 40, 3);
    let mut cfg = config(small(Family::Gru, true), 1, 10);
    cfg.reg_lambda = 0.7;
    cfg.reg_threshold = 0.05;
    let mut trainer = Trainer::new(cfg, 10).unwrap();
    // Mixed lengths exercise the grouping by bag length.
    let bags: Vec<Vec<&[f64]>> = data.train.bags[..6]
        .iter()
        .enumerate()
        .map(|(i, b)| data.train.bag_features(b)[..1 + i % 4].to_vec())
        .collect();
    let labels: Vec<f64> = (0..6).map(|i| i as f64 * 1.5).collect();
    let expected: f64 = bags
        .iter()
        .zip(&labels)
        .map(|(b, &y)| compute_loss(&trainer.model().forward(b).unwrap(), y, 0.7, 0.05))
        .sum::<f64>()
        / 6.0;
    let before = trainer.model().clone();
    let stats = trainer.step(&bags, &labels).unwrap();
    assert!((stats.loss - expected).abs() < 1e-12, "{} vs {expected}", stats.loss);
    assert!((stats.loss - (stats.mse + 0.7 * stats.penalty)).abs() < 1e-12);
    assert!(stats.penalty > 0.0);
    assert_ne!(&before, trainer.model());
}

#[test]
fn reruns_are_identical() {
    let data = dataset(TaskKind::UniqueSum, 3, 60, 1);
    let cfg = config(small(Family::Lstm, true), 3, 20);
    let a = train_on(&data, &cfg).unwrap();
    let b = train_on(&data, &cfg).unwrap();
    assert_eq!(metrics_csv(&a.history), metrics_csv(&b.history));
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.len(), 6);
    let c = train_on(&data, &RunConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(metrics_csv(&a.history), metrics_csv(&c.history));
}

#[test]
fn constant_labels_are_fit_quickly() {
    // A bag of one instance always holds exactly one unique class.
    let data = dataset(TaskKind::UniqueCount, 1, 500, 2);
    assert!(data.train.labels().iter().all(|&y| y == 1.0));
    let mut cfg = config(small(Family::DeepSet, false), 5, 20);
    cfg.lr = 0.01;
    let out = train_on(&data, &cfg).unwrap();
    assert!(out.val_mse < 0.01, "{}", out.val_mse);
}

#[test]
fn divergence_names_the_batch() {
    let data = dataset(TaskKind::WeightedTriangular, 5, 60, 4);
    let mut cfg = config(small(Family::Rnn, true), 3, 20);
    cfg.lr = 1e300;
    match train_on(&data, &cfg) {
        Err(TrainError::NonFinite { epoch, batch }) => assert!(epoch >= 1 && batch < 3),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.val_mse)),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let data = dataset(TaskKind::UniqueSum, 3, 30, 0);
    let too_big = config(small(Family::Gru, false), 1, 31);
    assert!(matches!(train_on(&data, &too_big), Err(TrainError::Config(_))));
    let mut reg = config(small(Family::Gru, false), 1, 10);
    reg.reg_lambda = 1.0;
    assert!(matches!(Trainer::new(reg.clone(), 10), Err(TrainError::Config(_))));
    reg.model.capacity = true;
    assert!(Trainer::new(reg.clone(), 10).is_ok());
    assert!(matches!(Trainer::new(reg.clone(), 784), Err(TrainError::Config(_))));
    reg.reg_lambda = -1.0;
    assert!(reg.validate().is_err());
    let json = r#"{"dataset":"d","model":{"family":"GRU"},"epochs":1,"seed":0,"bogus":1}"#;
    assert!(serde_json::from_str::<RunConfig>(json).is_err());
}

#[test]
fn multi_seed_aggregates_runs() {
    let data = dataset(TaskKind::UniqueSum, 3, 40, 5);
    let cfg = config(small(Family::Gru, true), 2, 20);
    let single = multi_seed(&data, &cfg, &[3]).unwrap();
    let direct = train_on(&data, &RunConfig { seed: 3, ..cfg.clone() }).unwrap();
    assert_eq!(single.val.mean, direct.val_mse);
    assert_eq!(single.test.unwrap().mean, direct.test_mse.unwrap());
    let same = multi_seed(&data, &cfg, &[4, 4]).unwrap();
    assert_eq!(same.val.stdev, 0.0);
    let diff = multi_seed(&data, &cfg, &[4, 5]).unwrap();
    assert!(diff.val.stdev > 0.0);
    assert!(multi_seed(&data, &cfg, &[]).is_err());
}

#[test]
fn strong_penalty_keeps_intermediates_below_threshold() {
    let data = dataset(TaskKind::UniqueCount, 5, 1000, 6);
    let mut cfg = config(small(Family::Gru, true), 5, 50);
    cfg.reg_lambda = 100.0;
    cfg.reg_threshold = 1.0;
    let out = train_on(&data, &cfg).unwrap();
    let preds = out.model.forward_batch(&feature_bags(&data.val)).unwrap();
    let all: Vec<f64> = preds.iter().flat_map(|o| o.intermediates.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    assert!(mean <= 1.1, "{mean}");
}

fn feature_bags(split: &Split) -> Vec<Vec<&[f64]>> {
    split.bags.iter().map(|b| split.bag_features(b)).collect()
}

#[test]
fn evaluate_mse_matches_a_plain_loop() {
    let data = dataset(TaskKind::TriangularCount, 6, 10, 9);
    let model = Model::init(small(Family::Attention, false), 1).unwrap();
    let mut sse = 0.0;
    for bag in &data.val.bags {
        sse += (model.forward(&data.val.bag_features(bag)).unwrap().prediction - bag.target()).powi(2);
    }
    let got = evaluate_mse(&model, &data.val).unwrap();
    assert!((got - sse / data.val.len() as f64).abs() < 1e-12);
}

/// Reads the class off each one-hot feature vector and answers with the
/// exact utility, optionally shifted by a constant.
struct OracleStub {
    task: TaskSpec,
    capacity: bool,
    offset: f64,
}

fn class_of(x: &[f64]) -> u8 {
    x.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i as u8)
        .unwrap()
}

impl Predictor for OracleStub {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn is_capacity(&self) -> bool {
        self.capacity
    }

    fn predict(&self, bags: &[Vec<&[f64]>]) -> Result<Vec<ForwardOutput>, ModelError> {
        Ok(bags
            .iter()
            .map(|bag| {
                let classes: Vec<u8> = bag.iter().map(|x| class_of(x)).collect();
                let nu: Vec<f64> = if self.capacity {
                    decompose(&self.task, &OrderedSequence::new(classes.clone()))
                        .unwrap()
                        .into_iter()
                        .map(|v| v as f64 + self.offset)
                        .collect()
                } else {
                    Vec::new()
                };
                let y = eval_task(&self.task, &ClassMultiset::from_classes(&classes).unwrap()).unwrap();
                output(y as f64 + self.offset, nu)
            })
            .collect())
    }
}

struct ConstStub(f64);

impl Predictor for ConstStub {
    fn name(&self) -> String {
        "const".into()
    }

    fn is_capacity(&self) -> bool {
        false
    }

    fn predict(&self, bags: &[Vec<&[f64]>]) -> Result<Vec<ForwardOutput>, ModelError> {
        Ok(bags.iter().map(|_| output(self.0, Vec::new())).collect())
    }
}

#[test]
fn oracle_stub_scores_perfectly_on_every_task() {
    for kind in TaskKind::ALL {
        let data = dataset(kind, 4, 10, 11);
        for capacity in [true, false] {
            let stub = OracleStub {
                task: data.task.clone(),
                capacity,
                offset: 0.0,
            };
            assert_eq!(evaluate_mse(&stub, &data.val).unwrap(), 0.0, "{kind}");
            assert_eq!(rounded_accuracy(&stub, &data.val).unwrap(), 1.0);
            let report = intermediates_report(&stub, &data.val, &data.task).unwrap();
            assert_eq!(report.pseudo, !capacity);
            assert_eq!(report.mae, 0.0, "{kind} capacity={capacity}");
        }
    }
}

#[test]
fn constant_predictor_error_is_label_spread() {
    let data = dataset(TaskKind::WeightedTriangular, 5, 200, 12);
    let mean = data.train.labels().iter().sum::<f64>() / data.train.len() as f64;
    let got = evaluate_mse(&ConstStub(mean), &data.val).unwrap();
    assert!((got - predict_mean_mse(&data.train, &data.val).unwrap()).abs() < 1e-9);
    // On its own split, mean-prediction error is the population variance.
    let own = predict_mean_mse(&data.train, &data.train).unwrap();
    let s = data.train.label_summary();
    assert!((own - s.variance * (s.n - 1) as f64 / s.n as f64).abs() < 1e-9);
}

#[test]
fn offset_stub_has_half_unit_intermediate_error() {
    let data = dataset(TaskKind::UniqueSum, 5, 10, 13);
    let stub = OracleStub {
        task: data.task.clone(),
        capacity: true,
        offset: 0.5,
    };
    let report = intermediate_mae(&stub, &data.val, &data.task).unwrap();
    assert!((report.mae - 0.5).abs() < 1e-12);
}

#[test]
fn rounding_boundary() {
    let task = TaskSpec::new(TaskKind::UniqueCount);
    let seqs = vec![vec![1, 2], vec![3, 3], vec![4, 5], vec![6, 7]];
    let split = Split::symbolic(SplitName::Val, &task, &seqs).unwrap();
    let near = |offset| OracleStub {
        task: task.clone(),
        capacity: false,
        offset,
    };
    assert_eq!(rounded_accuracy(&near(0.49), &split).unwrap(), 1.0);
    assert_eq!(rounded_accuracy(&near(-0.49), &split).unwrap(), 1.0);
    assert_eq!(rounded_accuracy(&near(0.51), &split).unwrap(), 0.0);
    // Three of the four bags hold two distinct classes.
    assert_eq!(rounded_accuracy(&ConstStub(2.2), &split).unwrap(), 0.75);
    assert_eq!(rounded_accuracy(&ConstStub(1.0), &split).unwrap(), 0.25);
}

#[test]
fn pseudo_intermediates_telescope() {
    let data = dataset(TaskKind::UniqueSum, 5, 10, 14);
    for family in Family::ALL {
        let model = Model::init(small(family, false), 2).unwrap();
        for bag in &data.val.bags[..5] {
            let x = data.val.bag_features(bag);
            let nu = pseudo_intermediates(&model, &x).unwrap();
            let full = model.forward(&x).unwrap().prediction;
            assert!((nu.iter().sum::<f64>() - full).abs() < 1e-9, "{family}");
            let one = pseudo_intermediates(&model, &x[..1]).unwrap();
            assert_eq!(one, vec![model.forward(&x[..1]).unwrap().prediction]);
        }
        assert!(pseudo_intermediates(&model, &[]).is_err());
    }
    let cap = Model::init(small(Family::Gru, true), 2).unwrap();
    let x = data.val.bag_features(&data.val.bags[0]);
    assert!(matches!(pseudo_intermediates(&cap, &x), Err(EvalError::IsCapacity(_))));
}

#[test]
fn permutation_sensitivity_contract() {
    let data = dataset(TaskKind::UniqueSum, 5, 10, 15);
    let deepset = Model::init(small(Family::DeepSet, false), 3).unwrap();
    let r = permutation_sensitivity(&deepset, &data.val, 5, 1000).unwrap();
    assert_eq!(r.mse.len(), 5);
    assert!(r.spread() <= 1e-9, "{}", r.spread());

    let gru = Model::init(small(Family::Gru, false), 3).unwrap();
    let same = permutation_sensitivity_with_seeds(&gru, &data.val, &[9, 9, 9]).unwrap();
    assert_eq!(same.spread(), 0.0);
    let varied = permutation_sensitivity(&gru, &data.val, 5, 1000).unwrap();
    assert!(varied.spread() > 0.0);

    assert!(matches!(
        permutation_sensitivity(&gru, &data.val, 1, 0),
        Err(EvalError::TooFewPermutations(1))
    ));
    assert!(matches!(
        intermediate_mae(&gru, &data.val, &data.task),
        Err(EvalError::NotCapacity(_))
    ));
    assert!(pseudo_intermediate_mae(&gru, &data.val, &data.task).unwrap().pseudo);
}

#[test]
fn size_sweep_of_one_size_is_a_plain_run() {
    let spec = DatasetSpec::symbolic(TaskKind::UniqueSum, 2, (40, 20, 20), 16);
    let cfg = config(small(Family::Rnn, true), 2, 20);
    let sweep = size_sweep(&spec, &cfg, &[4]).unwrap();
    let direct = train_on(
        &generate_dataset(&DatasetSpec::symbolic(TaskKind::UniqueSum, 4, (40, 20, 20), 16), None).unwrap(),
        &cfg,
    )
    .unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].size, 4);
    assert_eq!(sweep[0].val_mse, direct.val_mse);
    assert_eq!(sweep[0].test_mse, direct.test_mse);
    assert!(matches!(size_sweep(&spec, &cfg, &[0]), Err(EvalError::BadSize)));
}

#[test]
fn intermediate_report_jsonl() {
    let data = dataset(TaskKind::UniqueSum, 3, 10, 17);
    let model = Model::init(small(Family::Gru, true), 0).unwrap();
    let report = intermediate_mae(&model, &data.val, &data.task).unwrap();
    let text = report.to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), data.val.len());
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["classes"].as_array().unwrap().len(), 3);
    assert_eq!(first["expected"].as_array().unwrap().len(), 3);
    assert_eq!(first["predicted"].as_array().unwrap().len(), 3);
}
