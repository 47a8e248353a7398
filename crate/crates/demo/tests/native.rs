use capnet_demo::{decompose_bag, histogram, Session};

#[test]
fn decompose_matches_worked_examples() {
    let d = decompose_bag("US", &[8, 5, 8]).unwrap();
    assert_eq!((d.label, d.added), (13, vec![8, 5, 0]));
    assert_eq!(decompose_bag("Mult", &[6, 5, 4]).unwrap().added, vec![6, 24, 90]);
    let uss = decompose_bag("USS", &[1, 2]).unwrap();
    assert_eq!(uss.pairs.len(), 5);
    assert!(decompose_bag("Sum", &[1]).unwrap_err().contains("unknown task"));
    assert!(decompose_bag("Mult", &[0]).is_err());
}

#[test]
fn histogram_counts_every_bag() {
    let h = histogram("UC", 3, 500, 1).unwrap();
    assert_eq!(h.counts.iter().sum::<usize>(), 500);
    assert!(h.labels.iter().all(|&l| (1..=3).contains(&l)));
    assert!(h.labels.windows(2).all(|w| w[0] < w[1]));
    assert!(histogram("UC", 3, 0, 1).is_err());
}

#[test]
fn session_trains_and_explains() {
    let mut s = Session::new("US", "GRU", true, 0).unwrap();
    let before = s.val_mse().unwrap();
    let after = s.epoch().unwrap();
    assert_eq!(s.epochs_done(), 1);
    assert!(after < before, "{after} vs {before}");
    assert!(s.baseline_mse() > 0.0);
    let e = s.explain(&[3, 7, 3]).unwrap();
    assert_eq!(e.expected, vec![3, 7, 0]);
    assert_eq!(e.predicted.len(), 3);
    assert!(!e.pseudo);
    assert!((e.predicted.iter().sum::<f64>() - e.prediction).abs() < 1e-9);
    assert!(s.explain(&[]).is_err());
    assert!(s.explain(&[12]).is_err());

    let base = Session::new("WTri", "LSTM", false, 0).unwrap();
    assert!(base.explain(&[1, 1]).unwrap().pseudo);
    assert!(Session::new("US", "DeepSet", true, 0).is_err());
    assert!(Session::new("US", "MLP", false, 0).is_err());
}
