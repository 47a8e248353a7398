#![allow(dead_code)]

use capnet::autodiff::{Tape, Tensor};
use capnet::models::{Model, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_FLOOR: f64 = 1e-3;

/// `batch` random bags of `n` instances with features in [-1, 1).
pub fn random_bags(seed: u64, batch: usize, n: usize, dim: usize) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch)
        .map(|_| {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect()
}

pub fn as_refs(bags: &[Vec<Vec<f64>>]) -> Vec<Vec<&[f64]>> {
    bags.iter().map(|b| b.iter().map(Vec::as_slice).collect()).collect()
}

fn mse(model: &Model, bags: &[Vec<&[f64]>], labels: &[f64]) -> (f64, capnet::autodiff::Gradients) {
    let group: Vec<&[&[f64]]> = bags.iter().map(Vec::as_slice).collect();
    let mut tape = Tape::new();
    let out = model.forward_tape(&mut tape, &group).unwrap();
    let t = tape.constant(Tensor::vector(labels.to_vec()));
    let l = tape.mse_loss(out.prediction, t).unwrap();
    let v = tape.value(l).data()[0];
    (v, tape.backward(l).unwrap())
}

/// True if some intermediate sits near the kink of `abs`, where central
/// differences straddle two slopes.
fn near_abs_kink(model: &Model, bags: &[Vec<&[f64]>]) -> bool {
    if !(model.spec().capacity && model.spec().use_abs) {
        return false;
    }
    let mut signed = model.clone();
    let mut spec = signed.spec().clone();
    spec.use_abs = false;
    signed = Model::from_params(spec, signed.into_params()).unwrap();
    signed
        .forward_batch(bags)
        .unwrap()
        .iter()
        .flat_map(|o| o.intermediates.clone())
        .any(|v| v.abs() < 1e-3)
}

/// Largest relative error between tape gradients and central differences
/// over every parameter scalar, for an MSE loss on size-3 bags. Draws that
/// put an intermediate within 1e-3 of the abs kink are re-seeded.
pub fn max_gradient_error(spec: &ModelSpec, seed: u64) -> f64 {
    let mut s = seed;
    let (mut model, data) = loop {
        let model = Model::init(spec.clone(), s).unwrap();
        let data = random_bags(s.wrapping_add(1000), 2, 3, spec.input_dim);
        if !near_abs_kink(&model, &as_refs(&data)) {
            break (model, data);
        }
        s += 1;
    };
    let bags = as_refs(&data);
    let labels = [1.5, -0.5];
    let (_, grads) = mse(&model, &bags, &labels);
    let names: Vec<String> = model.params().names().map(String::from).collect();
    let mut worst: f64 = 0.0;
    for name in names {
        for i in 0..model.params().get(&name).unwrap().len() {
            let orig = model.params().get(&name).unwrap().data()[i];
            let mut at = |v: f64| {
                model.params_mut().get_mut(&name).unwrap().data_mut()[i] = v;
                mse(&model, &bags, &labels).0
            };
            let numeric = (at(orig + FD_STEP) - at(orig - FD_STEP)) / (2.0 * FD_STEP);
            model.params_mut().get_mut(&name).unwrap().data_mut()[i] = orig;
            let analytic = grads.get(&name).unwrap().data()[i];
            let scale = numeric.abs().max(analytic.abs()).max(1e-8);
            // Central differences carry about 1e-11 of roundoff, so entries
            // below 1e-3 are compared on that absolute floor.
            worst = worst.max((numeric - analytic).abs() / scale.max(GRAD_FLOOR));
        }
    }
    worst
}

/// Relative error of the directional derivative along a random unit
/// direction over all parameters at once.
pub fn directional_error(spec: &ModelSpec, seed: u64) -> f64 {
    let mut model = Model::init(spec.clone(), seed).unwrap();
    let data = random_bags(seed + 77, 3, 3, spec.input_dim);
    let bags = as_refs(&data);
    let labels = [2.0, 0.5, -1.0];
    let (_, grads) = mse(&model, &bags, &labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
    let names: Vec<String> = model.params().names().map(String::from).collect();
    let dir: Vec<Vec<f64>> = names
        .iter()
        .map(|n| (0..model.params().get(n).unwrap().len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let analytic: f64 = names
        .iter()
        .zip(&dir)
        .map(|(n, d)| grads.get(n).unwrap().data().iter().zip(d).map(|(g, v)| g * v / norm).sum::<f64>())
        .sum();
    let base = model.params().clone();
    let mut shifted = |sign: f64| {
        for (n, d) in names.iter().zip(&dir) {
            let t = model.params_mut().get_mut(n).unwrap();
            for ((x, b), v) in t.data_mut().iter_mut().zip(base.get(n).unwrap().data()).zip(d) {
                *x = b + sign * FD_STEP * v / norm;
            }
        }
        mse(&model, &bags, &labels).0
    };
    let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * FD_STEP);
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8)
}

/// Every (family, capacity) pair that forms a valid model.
pub fn all_variants() -> Vec<(capnet::models::Family, bool)> {
    capnet::models::Family::ALL
        .iter()
        .flat_map(|&f| {
            let caps: &[bool] = if f.is_sequential() { &[false, true] } else { &[false] };
            caps.iter().map(move |&c| (f, c))
        })
        .collect()
}

/// Width-4 spec used by the gradient checks.
pub fn tiny_spec(family: capnet::models::Family, capacity: bool) -> ModelSpec {
    ModelSpec::new(family, capacity).with_dims(4, 4, 4)
}
