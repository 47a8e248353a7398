use capnet::oracle::{
    decompose, eval_task, sample_pair_set, ClassMultiset, OrderedSequence, TaskKind, TaskSpec,
};
use proptest::prelude::*;

fn spec(kind: TaskKind, pair_seed: u64) -> TaskSpec {
    match kind {
        TaskKind::UniqueSumSynergy => {
            TaskSpec::with_pairs(kind, sample_pair_set(pair_seed, 5).unwrap()).unwrap()
        }
        _ => TaskSpec::new(kind),
    }
}

fn utility(task: &TaskSpec, classes: &[u8]) -> u64 {
    eval_task(task, &ClassMultiset::from_classes(classes).unwrap()).unwrap()
}

/// A task plus a bag of 1..=10 classes drawn from the task's range.
fn task_and_bag() -> impl Strategy<Value = (TaskSpec, Vec<u8>)> {
    (0usize..TaskKind::ALL.len(), any::<u64>()).prop_flat_map(|(k, seed)| {
        let task = spec(TaskKind::ALL[k], seed);
        let (lo, hi) = task.class_range;
        (Just(task), proptest::collection::vec(lo..=hi, 1..=10))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn added_values_telescope_to_the_utility((task, bag) in task_and_bag()) {
        let nu = decompose(&task, &OrderedSequence::new(bag.clone())).unwrap();
        prop_assert_eq!(nu.len(), bag.len());
        prop_assert_eq!(nu.iter().sum::<u64>(), utility(&task, &bag));
    }

    #[test]
    fn prefix_utilities_never_decrease((task, bag) in task_and_bag()) {
        let mut prev = 0;
        for k in 1..=bag.len() {
            let u = utility(&task, &bag[..k]);
            prop_assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn utility_ignores_order((task, bag) in task_and_bag(), rot in 0usize..10) {
        let mut other = bag.clone();
        other.rotate_left(rot % bag.len());
        other.reverse();
        prop_assert_eq!(utility(&task, &bag), utility(&task, &other));
    }

    #[test]
    fn each_added_value_is_a_prefix_difference((task, bag) in task_and_bag()) {
        let nu = decompose(&task, &OrderedSequence::new(bag.clone())).unwrap();
        for (i, v) in nu.iter().enumerate() {
            let before = if i == 0 { 0 } else { utility(&task, &bag[..i]) };
            prop_assert_eq!(*v, utility(&task, &bag[..=i]) - before);
        }
    }

    #[test]
    fn multiset_union_counts_add(a in proptest::collection::vec(0u8..10, 0..8), b in proptest::collection::vec(0u8..10, 0..8)) {
        let ma = ClassMultiset::from_classes(&a).unwrap();
        let mb = ClassMultiset::from_classes(&b).unwrap();
        let joined: Vec<u8> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(ma.union(&mb), ClassMultiset::from_classes(&joined).unwrap());
        prop_assert_eq!(ma.union(&mb).total() as usize, joined.len());
    }
}

/// Every split of every bag of size <= 4 over classes 0..=4 into two parts.
fn splits() -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut bags: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..4 {
        let grown: Vec<Vec<u8>> = bags
            .iter()
            .filter(|b| b.len() < 4)
            .flat_map(|b| (0..5u8).map(move |c| [b.as_slice(), &[c]].concat()))
            .collect();
        bags.extend(grown);
        bags.sort();
        bags.dedup();
    }
    let mut out = Vec::new();
    for bag in bags {
        for mask in 0u32..(1 << bag.len()) {
            let (a, b): (Vec<(usize, u8)>, Vec<(usize, u8)>) =
                bag.iter().copied().enumerate().partition(|(i, _)| mask & (1 << i) != 0);
            out.push((a.into_iter().map(|p| p.1).collect(), b.into_iter().map(|p| p.1).collect()));
        }
    }
    out
}

fn joined(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().chain(b).copied().collect()
}

#[test]
fn unique_tasks_are_subadditive() {
    for kind in [TaskKind::UniqueSum, TaskKind::UniqueCount] {
        let task = TaskSpec::new(kind);
        for (a, b) in splits() {
            assert!(utility(&task, &joined(&a, &b)) <= utility(&task, &a) + utility(&task, &b), "{kind} {a:?} {b:?}");
        }
    }
}

#[test]
fn triangular_tasks_are_superadditive() {
    for kind in [TaskKind::WeightedTriangular, TaskKind::TriangularCount] {
        let task = TaskSpec::new(kind);
        for (a, b) in splits() {
            assert!(utility(&task, &joined(&a, &b)) >= utility(&task, &a) + utility(&task, &b), "{kind} {a:?} {b:?}");
        }
    }
}

#[test]
fn subadditivity_is_strict_somewhere() {
    let us = TaskSpec::new(TaskKind::UniqueSum);
    assert!(utility(&us, &[3, 3]) < 2 * utility(&us, &[3]));
    let tri = TaskSpec::new(TaskKind::TriangularCount);
    assert!(utility(&tri, &[3, 3]) > 2 * utility(&tri, &[3]));
}

#[test]
fn synergy_bonus_needs_both_classes() {
    let task = TaskSpec::with_pairs(TaskKind::UniqueSumSynergy, vec![[2, 7]]).unwrap();
    assert_eq!(utility(&task, &[2]), 2);
    assert_eq!(utility(&task, &[7]), 7);
    assert_eq!(utility(&task, &[2, 7]), 2 + 7 + 10);
    let nu = decompose(&task, &OrderedSequence::new(vec![7, 2, 2])).unwrap();
    assert_eq!(nu, vec![7, 12, 0]);
}

#[test]
fn worked_decompositions() {
    let nu = |kind, seq: &[u8]| decompose(&TaskSpec::new(kind), &OrderedSequence::new(seq.to_vec())).unwrap();
    assert_eq!(nu(TaskKind::UniqueSum, &[8, 5, 8]), vec![8, 5, 0]);
    assert_eq!(nu(TaskKind::Product, &[6, 5, 4]), vec![6, 24, 90]);
    assert_eq!(nu(TaskKind::WeightedTriangular, &[2, 2, 3, 6, 3]), vec![2, 4, 3, 6, 6]);
    assert_eq!(nu(TaskKind::UniqueSum, &[7, 8, 6, 7, 8]), vec![7, 8, 6, 0, 0]);
}
