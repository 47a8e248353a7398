//! Exact set-function oracles for the synthetic tasks and their sequential
//! added-value decomposition.
//!
//! Every task is a function of class counts only. The decomposition of an
//! ordered bag takes `mu(empty) = 0` for the first added value of every task,
//! so the added values always sum to the bag's utility.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 10;
/// Number of unordered class pairs over ten classes.
pub const MAX_PAIRS: usize = NUM_CLASSES * (NUM_CLASSES - 1) / 2;
/// Bonus added per present synergy pair.
pub const PAIR_BONUS: u64 = 10;
/// Bumped whenever a task definition changes; recorded in dataset manifests.
pub const ORACLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("class {0} outside 0..=9")]
    InvalidClass(u8),
    #[error("Mult bags cannot contain class 0")]
    ZeroClassInMult,
    #[error("pair count {0} exceeds the {MAX_PAIRS} available pairs")]
    TooManyPairs(usize),
    #[error("invalid synergy pair {0:?}: classes must satisfy a < b <= 9 and pairs must be distinct")]
    InvalidPair([u8; 2]),
    #[error("invalid class range {0}..={1}")]
    InvalidRange(u8, u8),
    #[error("task utility overflows u64")]
    Overflow,
    #[error("unknown task {0:?}")]
    UnknownTask(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Unique sum: sum of distinct classes present.
    #[serde(rename = "US")]
    UniqueSum,
    /// Weighted triangular: `sum c * T(count(c))`.
    #[serde(rename = "WTri")]
    WeightedTriangular,
    /// Unique sum plus a bonus per synergy pair present.
    #[serde(rename = "USS", alias = "US+S")]
    UniqueSumSynergy,
    /// Number of distinct classes.
    #[serde(rename = "UC")]
    UniqueCount,
    /// Triangular count: `sum T(count(c))`.
    #[serde(rename = "TriC")]
    TriangularCount,
    /// Product of all instance classes.
    #[serde(rename = "Mult")]
    Product,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::UniqueSum,
        TaskKind::WeightedTriangular,
        TaskKind::UniqueSumSynergy,
        TaskKind::UniqueCount,
        TaskKind::TriangularCount,
        TaskKind::Product,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::UniqueSum => "US",
            TaskKind::WeightedTriangular => "WTri",
            TaskKind::UniqueSumSynergy => "USS",
            TaskKind::UniqueCount => "UC",
            TaskKind::TriangularCount => "TriC",
            TaskKind::Product => "Mult",
        }
    }

    /// Inclusive class bounds used when sampling bags.
    pub fn default_class_range(self) -> (u8, u8) {
        match self {
            TaskKind::Product => (1, 9),
            _ => (0, 9),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "US" => Ok(TaskKind::UniqueSum),
            "WTri" => Ok(TaskKind::WeightedTriangular),
            "USS" | "US+S" => Ok(TaskKind::UniqueSumSynergy),
            "UC" => Ok(TaskKind::UniqueCount),
            "TriC" => Ok(TaskKind::TriangularCount),
            "Mult" => Ok(TaskKind::Product),
            _ => Err(OracleError::UnknownTask(s.to_string())),
        }
    }
}

/// A task together with its synergy pairs and sampling range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default)]
    pub pair_set: Vec<[u8; 2]>,
    pub class_range: (u8, u8),
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            pair_set: Vec::new(),
            class_range: kind.default_class_range(),
        }
    }

    pub fn with_pairs(kind: TaskKind, mut pairs: Vec<[u8; 2]>) -> Result<Self, OracleError> {
        pairs.sort_unstable();
        let spec = Self {
            pair_set: pairs,
            ..Self::new(kind)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let (lo, hi) = self.class_range;
        if lo > hi || hi as usize >= NUM_CLASSES {
            return Err(OracleError::InvalidRange(lo, hi));
        }
        if self.kind == TaskKind::Product && lo == 0 {
            return Err(OracleError::ZeroClassInMult);
        }
        if self.pair_set.len() > MAX_PAIRS {
            return Err(OracleError::TooManyPairs(self.pair_set.len()));
        }
        for (i, p) in self.pair_set.iter().enumerate() {
            if p[0] >= p[1] || p[1] as usize >= NUM_CLASSES || self.pair_set[..i].contains(p) {
                return Err(OracleError::InvalidPair(*p));
            }
        }
        Ok(())
    }
}

/// Count of each class in a bag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ClassMultiset {
    counts: [u32; NUM_CLASSES],
}

impl ClassMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_classes(classes: &[u8]) -> Result<Self, OracleError> {
        let mut m = Self::new();
        for &c in classes {
            m.insert(c)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, class: u8) -> Result<(), OracleError> {
        let slot = self
            .counts
            .get_mut(class as usize)
            .ok_or(OracleError::InvalidClass(class))?;
        *slot += 1;
        Ok(())
    }

    pub fn count(&self, class: u8) -> u32 {
        self.counts.get(class as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u32; NUM_CLASSES] {
        &self.counts
    }

    pub fn contains(&self, class: u8) -> bool {
        self.count(class) > 0
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Multiset sum of two bags.
    pub fn union(&self, other: &ClassMultiset) -> ClassMultiset {
        let mut counts = self.counts;
        for (a, b) in counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        ClassMultiset { counts }
    }
}

/// Ordered class ids of a bag.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderedSequence {
    pub classes: Vec<u8>,
}

impl OrderedSequence {
    pub fn new(classes: Vec<u8>) -> Self {
        Self { classes }
    }

    pub fn multiset(&self) -> Result<ClassMultiset, OracleError> {
        ClassMultiset::from_classes(&self.classes)
    }
}

/// The `m`-th triangular number, `m (m + 1) / 2`.
pub fn triangular(m: u64) -> u64 {
    m * (m + 1) / 2
}

/// Utility of a bag under `task`. The empty bag has utility 0, except for
/// `Mult` where it is 1.
pub fn eval_task(task: &TaskSpec, bag: &ClassMultiset) -> Result<u64, OracleError> {
    let counts = bag.counts();
    let classes = (0..NUM_CLASSES as u64).zip(counts.iter().map(|&n| n as u64));
    let value = match task.kind {
        TaskKind::UniqueSum => classes.filter(|&(_, n)| n > 0).map(|(c, _)| c).sum(),
        TaskKind::WeightedTriangular => classes.map(|(c, n)| c * triangular(n)).sum(),
        TaskKind::UniqueSumSynergy => {
            let unique: u64 = classes.filter(|&(_, n)| n > 0).map(|(c, _)| c).sum();
            let bonus = task
                .pair_set
                .iter()
                .filter(|[a, b]| bag.contains(*a) && bag.contains(*b))
                .count() as u64;
            unique + PAIR_BONUS * bonus
        }
        TaskKind::UniqueCount => counts.iter().filter(|&&n| n > 0).count() as u64,
        TaskKind::TriangularCount => counts.iter().map(|&n| triangular(n as u64)).sum(),
        TaskKind::Product => {
            if counts[0] > 0 {
                return Err(OracleError::ZeroClassInMult);
            }
            let mut product: u64 = 1;
            for (c, n) in classes {
                for _ in 0..n {
                    product = product.checked_mul(c).ok_or(OracleError::Overflow)?;
                }
            }
            product
        }
    };
    Ok(value)
}

/// Added value of each instance given the instances before it.
///
/// `nu[0]` is the utility of the first instance alone and `nu[i]` is
/// `mu(prefix_{i+1}) - mu(prefix_i)`.
pub fn decompose(task: &TaskSpec, seq: &OrderedSequence) -> Result<Vec<u64>, OracleError> {
    let mut prefix = ClassMultiset::new();
    let mut previous = 0u64;
    let mut added = Vec::with_capacity(seq.classes.len());
    for &c in &seq.classes {
        prefix.insert(c)?;
        let current = eval_task(task, &prefix)?;
        // Monotone tasks never decrease, so this cannot underflow.
        added.push(current - previous);
        previous = current;
    }
    Ok(added)
}

/// `count` distinct unordered class pairs drawn without replacement, sorted.
pub fn sample_pair_set(seed: u64, count: usize) -> Result<Vec<[u8; 2]>, OracleError> {
    if count > MAX_PAIRS {
        return Err(OracleError::TooManyPairs(count));
    }
    let mut all: Vec<[u8; 2]> = (0..NUM_CLASSES as u8)
        .flat_map(|a| (a + 1..NUM_CLASSES as u8).map(move |b| [a, b]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let mut chosen = all[..count].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(kind: TaskKind, classes: &[u8]) -> u64 {
        eval_task(&TaskSpec::new(kind), &ClassMultiset::from_classes(classes).unwrap()).unwrap()
    }

    fn nu(kind: TaskKind, classes: &[u8]) -> Vec<u64> {
        decompose(&TaskSpec::new(kind), &OrderedSequence::new(classes.to_vec())).unwrap()
    }

    #[test]
    fn triangular_numbers() {
        assert_eq!(triangular(0), 0);
        assert_eq!(triangular(3), 6);
        assert_eq!(triangular(4), 10);
    }

    #[test]
    fn task_values_on_worked_bags() {
        assert_eq!(eval(TaskKind::UniqueSum, &[8, 5, 8]), 13);
        assert_eq!(eval(TaskKind::WeightedTriangular, &[2, 2, 3, 6, 3]), 21);
        assert_eq!(eval(TaskKind::Product, &[6, 5, 4]), 120);
        assert_eq!(eval(TaskKind::UniqueCount, &[1, 1, 2]), 2);
        assert_eq!(eval(TaskKind::TriangularCount, &[3, 3, 3, 7]), 7);
    }

    #[test]
    fn empty_bag_utilities() {
        assert_eq!(eval(TaskKind::UniqueSum, &[]), 0);
        assert_eq!(eval(TaskKind::Product, &[]), 1);
    }

    #[test]
    fn decompositions_of_worked_sequences() {
        assert_eq!(nu(TaskKind::UniqueSum, &[8, 5, 8]), vec![8, 5, 0]);
        assert_eq!(nu(TaskKind::Product, &[6, 5, 4]), vec![6, 24, 90]);
        assert_eq!(nu(TaskKind::WeightedTriangular, &[2, 2, 3, 6, 3]), vec![2, 4, 3, 6, 6]);
        assert_eq!(nu(TaskKind::UniqueSum, &[7, 8, 6, 7, 8]), vec![7, 8, 6, 0, 0]);
    }

    #[test]
    fn mult_rejects_class_zero() {
        let task = TaskSpec::new(TaskKind::Product);
        let bag = ClassMultiset::from_classes(&[3, 0]).unwrap();
        assert_eq!(eval_task(&task, &bag), Err(OracleError::ZeroClassInMult));
        let seq = OrderedSequence::new(vec![2, 0]);
        assert_eq!(decompose(&task, &seq), Err(OracleError::ZeroClassInMult));
    }

    #[test]
    fn mult_overflow_is_reported() {
        let task = TaskSpec::new(TaskKind::Product);
        let bag = ClassMultiset::from_classes(&[9; 21]).unwrap();
        assert_eq!(eval_task(&task, &bag), Err(OracleError::Overflow));
    }

    #[test]
    fn invalid_class_rejected() {
        assert_eq!(ClassMultiset::from_classes(&[10]), Err(OracleError::InvalidClass(10)));
    }

    #[test]
    fn synergy_bonus() {
        let task = TaskSpec::with_pairs(TaskKind::UniqueSumSynergy, vec![[2, 9]]).unwrap();
        let bag = ClassMultiset::from_classes(&[2, 9, 4]).unwrap();
        assert_eq!(eval_task(&task, &bag).unwrap(), 25);
        // Presence, not multiplicity.
        let bag = ClassMultiset::from_classes(&[2, 9, 9, 2]).unwrap();
        assert_eq!(eval_task(&task, &bag).unwrap(), 21);
    }

    #[test]
    fn empty_pair_set_degenerates_to_unique_sum() {
        let pairs = sample_pair_set(7, 0).unwrap();
        assert!(pairs.is_empty());
        let uss = TaskSpec::with_pairs(TaskKind::UniqueSumSynergy, pairs).unwrap();
        let bag = ClassMultiset::from_classes(&[1, 4, 4, 9]).unwrap();
        assert_eq!(eval_task(&uss, &bag).unwrap(), eval(TaskKind::UniqueSum, &[1, 4, 4, 9]));
    }

    #[test]
    fn pair_sampling() {
        let a = sample_pair_set(11, 5).unwrap();
        assert_eq!(a, sample_pair_set(11, 5).unwrap());
        assert_eq!(a.len(), 5);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|p| p[0] < p[1] && p[1] <= 9));
        assert_eq!(sample_pair_set(0, 45).unwrap().len(), 45);
        assert_eq!(sample_pair_set(0, 46), Err(OracleError::TooManyPairs(46)));
    }

    #[test]
    fn task_spec_validation() {
        assert!(TaskSpec::with_pairs(TaskKind::UniqueSumSynergy, vec![[3, 3]]).is_err());
        assert!(TaskSpec::with_pairs(TaskKind::UniqueSumSynergy, vec![[1, 3], [1, 3]]).is_err());
        let mut mult = TaskSpec::new(TaskKind::Product);
        assert_eq!(mult.class_range, (1, 9));
        mult.class_range = (0, 9);
        assert_eq!(mult.validate(), Err(OracleError::ZeroClassInMult));
    }

    #[test]
    fn task_names_round_trip() {
        for kind in TaskKind::ALL {
            assert_eq!(kind.name().parse::<TaskKind>().unwrap(), kind);
        }
        assert_eq!("US+S".parse::<TaskKind>().unwrap(), TaskKind::UniqueSumSynergy);
        assert!("Sum".parse::<TaskKind>().is_err());
    }
}
