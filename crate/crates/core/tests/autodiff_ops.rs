use capnet::autodiff::{checkpoint, Activation, AdamState, ParamStore, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces an arbitrary tensor to a scalar with fixed random weights so
/// every output element gets a distinct adjoint.
fn weighted_sum(tape: &mut Tape, y: Var) -> Var {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(random(&shape, 4242));
    let p = tape.mul(y, w).unwrap();
    tape.reduce_sum(p, None).unwrap()
}

/// Largest relative error (denominator floored at 1e-3) between tape and
/// central-difference gradients of `build` w.r.t. every tensor in `store`.
fn check(store: &ParamStore, build: impl Fn(&mut Tape, &ParamStore) -> Var) -> f64 {
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let y = build(&mut tape, s);
        let l = weighted_sum(&mut tape, y);
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let y = build(&mut tape, store);
    let l = weighted_sum(&mut tape, y);
    let grads = tape.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    let mut s = store.clone();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        for i in 0..store.get(&name).unwrap().len() {
            let orig = store.get(&name).unwrap().data()[i];
            s.get_mut(&name).unwrap().data_mut()[i] = orig + 1e-5;
            let up = eval(&s);
            s.get_mut(&name).unwrap().data_mut()[i] = orig - 1e-5;
            let down = eval(&s);
            s.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / 2e-5;
            let analytic = grads.get(&name).unwrap().data()[i];
            let scale = numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    worst
}

fn store(items: &[(&str, &[usize])]) -> ParamStore {
    let mut s = ParamStore::new(0);
    for (i, (name, shape)) in items.iter().enumerate() {
        s.insert(*name, random(shape, i as u64 + 1));
    }
    s
}

#[test]
fn linear_gradients() {
    let s = store(&[("x", &[3, 4]), ("w", &[4, 2]), ("b", &[2])]);
    let err = check(&s, |t, s| {
        let (x, w, b) = (t.param(s, "x").unwrap(), t.param(s, "w").unwrap(), t.param(s, "b").unwrap());
        t.linear(x, w, b).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn activation_gradients() {
    for kind in [Activation::Tanh, Activation::Sigmoid, Activation::Relu, Activation::Abs] {
        let s = store(&[("x", &[4, 3])]);
        let err = check(&s, |t, s| {
            let x = t.param(s, "x").unwrap();
            t.activation(kind, x)
        });
        assert!(err < 1e-6, "{kind}: {err}");
    }
}

#[test]
fn structural_op_gradients() {
    let s = store(&[("a", &[3, 2]), ("b", &[3, 4]), ("c", &[3, 2])]);
    let err = check(&s, |t, s| {
        let (a, b, c) = (t.param(s, "a").unwrap(), t.param(s, "b").unwrap(), t.param(s, "c").unwrap());
        let ab = t.concat(a, b).unwrap();
        let mid = t.slice_cols(ab, 1, 3).unwrap();
        let rows = t.concat_rows(&[a, c, a]).unwrap();
        let top = t.slice_rows(rows, 2, 3).unwrap();
        let b3 = t.slice_cols(b, 0, 3).unwrap();
        let x = t.sub(mid, b3).unwrap();
        let x = t.slice_cols(x, 0, 2).unwrap();
        let y = t.mul(x, top).unwrap();
        let y = t.add(y, c).unwrap();
        let y = t.scale(y, -1.7);
        t.add_scalar(y, 0.3)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn reduction_and_reshape_gradients() {
    let s = store(&[("x", &[2, 3, 4]), ("col", &[6])]);
    for axis in [None, Some(0), Some(1), Some(2)] {
        let err = check(&s, |t, s| {
            let x = t.param(s, "x").unwrap();
            let col = t.param(s, "col").unwrap();
            let m = t.reshape(x, vec![6, 4]).unwrap();
            let m = t.mul_column(m, col).unwrap();
            let m = t.reshape(m, vec![2, 3, 4]).unwrap();
            t.reduce_sum(m, axis).unwrap()
        });
        assert!(err < 1e-6, "{axis:?}: {err}");
    }
}

#[test]
fn softmax_and_mse_gradients() {
    let s = store(&[("x", &[3, 5])]);
    let err = check(&s, |t, s| {
        let x = t.param(s, "x").unwrap();
        t.softmax_rows(x).unwrap()
    });
    assert!(err < 1e-6, "{err}");
    let s = store(&[("p", &[4]), ("y", &[4])]);
    let err = check(&s, |t, s| {
        let (p, y) = (t.param(s, "p").unwrap(), t.param(s, "y").unwrap());
        t.mse_loss(p, y).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn linear_matches_loop_oracle() {
    let (x, w, b) = (random(&[5, 7], 1), random(&[7, 3], 2), random(&[3], 3));
    let mut tape = Tape::new();
    let (vx, vw, vb) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let y = tape.linear(vx, vw, vb).unwrap();
    for r in 0..5 {
        for c in 0..3 {
            let mut acc = b.data()[c];
            for k in 0..7 {
                acc += x.data()[r * 7 + k] * w.data()[k * 3 + c];
            }
            assert!((tape.value(y).data()[r * 3 + c] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn reduce_sum_matches_loop_oracle() {
    let x = random(&[3, 4, 2], 9);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let s1 = tape.reduce_sum(v, Some(1)).unwrap();
    assert_eq!(tape.value(s1).shape(), &[3, 2]);
    for i in 0..3 {
        for k in 0..2 {
            let acc: f64 = (0..4).map(|j| x.data()[i * 8 + j * 2 + k]).sum();
            assert!((tape.value(s1).data()[i * 2 + k] - acc).abs() < 1e-12);
        }
    }
    let all = tape.reduce_sum(v, None).unwrap();
    assert!((tape.value(all).data()[0] - x.data().iter().sum::<f64>()).abs() < 1e-12);
}

#[test]
fn softmax_rows_are_on_the_simplex() {
    let mut tape = Tape::new();
    let big = Tensor::from_rows(&[vec![1000.0, 1000.0, 999.0], vec![-5.0, 0.0, 5.0]]).unwrap();
    let v = tape.constant(big);
    let s = tape.softmax_rows(v).unwrap();
    for r in tape.value(s).data().chunks(3) {
        assert!(r.iter().all(|&p| p >= 0.0 && p.is_finite()));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let eq = tape.constant(Tensor::vector(vec![0.3; 4]));
    let s = tape.softmax_rows(eq).unwrap();
    assert!(tape.value(s).data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = ParamStore::new(0);
    params.insert("theta", Tensor::vector(vec![0.0, 1.0]));
    let mut tape = Tape::new();
    let p = tape.param(&params, "theta").unwrap();
    let l = tape.reduce_sum(p, None).unwrap();
    let grads = tape.backward(l).unwrap();
    let mut adam = AdamState::new(0.001);
    adam.step(&mut params, &grads).unwrap();
    // With bias correction the first update is lr * g / (|g| + eps).
    let expected = 0.001 / (1.0 + 1e-8);
    let theta = params.get("theta").unwrap().data();
    assert!((theta[0] + expected).abs() < 1e-15);
    assert!((theta[1] - (1.0 - expected)).abs() < 1e-15);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_rejects_missing_gradients() {
    let mut params = ParamStore::new(0);
    params.insert("a", Tensor::scalar(1.0));
    params.insert("b", Tensor::scalar(1.0));
    let mut tape = Tape::new();
    let a = tape.param(&params, "a").unwrap();
    let grads = tape.backward(a).unwrap();
    assert!(grads.get("b").is_none());
    assert!(matches!(
        AdamState::new(0.1).step(&mut params, &grads),
        Err(TensorError::MissingGradient(_))
    ));
}

#[test]
fn backward_contract() {
    let mut params = ParamStore::new(0);
    params.insert("x", Tensor::vector(vec![1.0, 2.0]));
    params.insert("unused", Tensor::vector(vec![3.0]));
    let mut tape = Tape::new();
    let x = tape.param(&params, "x").unwrap();
    let u = tape.param(&params, "unused").unwrap();
    assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    let sq = tape.mul(x, x).unwrap();
    let l = tape.reduce_sum(sq, None).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get("x").unwrap().data(), &[2.0, 4.0]);
    assert_eq!(g.get("unused").unwrap().data(), &[0.0]);
    let _ = u;
    assert_eq!(tape.backward(l).unwrap_err(), TensorError::BackwardTwice);
}

#[test]
fn shape_errors_are_reported() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[3, 3]));
    let w = tape.constant(Tensor::zeros(&[4, 2]));
    let bias = tape.constant(Tensor::zeros(&[2]));
    assert!(matches!(tape.concat(a, b), Err(TensorError::Shape { .. })));
    assert!(matches!(tape.linear(a, w, bias), Err(TensorError::Shape { .. })));
    assert!(matches!(tape.add(a, b), Err(TensorError::Shape { .. })));
    assert!(tape.reduce_sum(a, Some(2)).is_err());
    assert!(tape.slice_cols(a, 2, 2).is_err());
    assert!(tape.reshape(a, vec![5]).is_err());
    assert!("gelu".parse::<Activation>().is_err());
}

proptest! {
    #[test]
    fn checkpoint_round_trips_any_store(
        shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 0..3), 1..5),
        seed in any::<u64>(),
    ) {
        let mut s = ParamStore::new(seed);
        for (i, shape) in shapes.iter().enumerate() {
            s.insert(format!("layer.{i}"), random(shape, seed.wrapping_add(i as u64)));
        }
        let back = checkpoint::decode(&checkpoint::encode(&s)).unwrap();
        prop_assert_eq!(back.len(), s.len());
        for (name, t) in s.iter() {
            prop_assert_eq!(back.get(name), Some(t));
        }
    }
}
