use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, ImagePools, SplitName, DATA_DIR_ENV, DEFAULT_VAL_HOLDOUT};
use crate::oracle::{
    eval_task, sample_pair_set, ClassMultiset, OrderedSequence, TaskKind, TaskSpec, NUM_CLASSES,
    ORACLE_VERSION,
};
use crate::stats::Summary;

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";

// Domains keep the RNG streams of different consumers disjoint.
const STREAM_BAGS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const PAIR_SEED_SALT: u64 = 0x5eed_9a15;

static ONE_HOT: [[f64; NUM_CLASSES]; NUM_CLASSES] = {
    let mut m = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    let mut i = 0;
    while i < NUM_CLASSES {
        m[i][i] = 1.0;
        i += 1;
    }
    m
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One-hot class vectors instead of images.
    #[default]
    Symbolic,
    /// Scaled pixels of a randomly drawn image of the class.
    Image,
}

/// Number of instances per bag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetSize {
    Fixed(usize),
    /// Each bag draws its size uniformly from the list.
    Choice(Vec<usize>),
    /// Each bag draws its size uniformly from `min..=max`.
    Range { min: usize, max: usize },
}

impl SetSize {
    fn validate(&self) -> Result<(), DataError> {
        let ok = match self {
            SetSize::Fixed(n) => *n >= 1,
            SetSize::Choice(v) => !v.is_empty() && v.iter().all(|&n| n >= 1),
            SetSize::Range { min, max } => *min >= 1 && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(DataError::Spec(format!("set sizes must be >= 1, got {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            SetSize::Fixed(n) => *n,
            SetSize::Choice(v) => v[rng.gen_range(0..v.len())],
            SetSize::Range { min, max } => rng.gen_range(*min..=*max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.train,
            SplitName::Val => self.val,
            SplitName::Test => self.test,
        }
    }
}

fn default_pair_count() -> usize {
    5
}

/// Everything that determines a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub task: TaskKind,
    /// Synergy pairs to sample for `USS` when `pair_set` is not given.
    #[serde(default = "default_pair_count")]
    pub pair_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_set: Option<Vec<[u8; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_range: Option<(u8, u8)>,
    #[serde(default)]
    pub mode: Mode,
    pub set_size: SetSize,
    pub counts: SplitCounts,
    pub seed: u64,
    /// Half-width of the uniform noise added to symbolic features.
    #[serde(default)]
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_dir: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn symbolic(task: TaskKind, set_size: usize, counts: (usize, usize, usize), seed: u64) -> Self {
        Self {
            task,
            pair_count: default_pair_count(),
            pair_set: None,
            class_range: None,
            mode: Mode::Symbolic,
            set_size: SetSize::Fixed(set_size),
            counts: SplitCounts {
                train: counts.0,
                val: counts.1,
                test: counts.2,
            },
            seed,
            noise: 0.0,
            image_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.set_size.validate()?;
        if self.counts.train == 0 || self.counts.val == 0 || self.counts.test == 0 {
            return Err(DataError::Spec(format!(
                "split counts must be positive, got {:?}",
                self.counts
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DataError::Spec(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        self.resolve_task()?;
        Ok(())
    }

    /// The task with its synergy pairs fixed.
    pub fn resolve_task(&self) -> Result<TaskSpec, DataError> {
        let pairs = match (&self.pair_set, self.task) {
            (Some(p), _) => p.clone(),
            (None, TaskKind::UniqueSumSynergy) => {
                sample_pair_set(self.seed ^ PAIR_SEED_SALT, self.pair_count)?
            }
            (None, _) => Vec::new(),
        };
        let mut task = TaskSpec::with_pairs(self.task, pairs)?;
        if let Some(range) = self.class_range {
            task.class_range = range;
        }
        task.validate()?;
        Ok(task)
    }

    /// Image corpus directory: `image_dir`, else `$CAPNET_DATA_DIR/mnist`
    /// (or `fashion-mnist` for the counting tasks).
    pub fn image_root(&self) -> Option<PathBuf> {
        if let Some(dir) = &self.image_dir {
            return Some(dir.clone());
        }
        let root = std::env::var_os(DATA_DIR_ENV)?;
        let corpus = match self.task {
            TaskKind::UniqueCount | TaskKind::TriangularCount => "fashion-mnist",
            _ => "mnist",
        };
        Some(PathBuf::from(root).join(corpus))
    }
}

/// One bag member.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub class: u8,
    /// Global image id in image mode.
    pub image: Option<u32>,
    noisy: Option<Box<[f64]>>,
}

impl Instance {
    pub fn symbolic(class: u8) -> Self {
        Self {
            class,
            image: None,
            noisy: None,
        }
    }

    pub fn with_image(class: u8, image: u32) -> Self {
        Self {
            class,
            image: Some(image),
            noisy: None,
        }
    }
}

/// An ordered bag of instances with its utility label.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub instances: Vec<Instance>,
    pub label: u64,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn classes(&self) -> Vec<u8> {
        self.instances.iter().map(|i| i.class).collect()
    }

    pub fn sequence(&self) -> OrderedSequence {
        OrderedSequence::new(self.classes())
    }

    pub fn target(&self) -> f64 {
        self.label as f64
    }
}

#[derive(Clone, Debug)]
enum Source {
    Symbolic,
    Image(Arc<ImagePools>),
}

/// The bags of one split together with the means to featurize them.
#[derive(Clone, Debug)]
pub struct Split {
    pub name: SplitName,
    pub bags: Vec<Bag>,
    source: Source,
}

impl Split {
    /// A symbolic split built directly from class sequences.
    pub fn symbolic(name: SplitName, task: &TaskSpec, sequences: &[Vec<u8>]) -> Result<Self, DataError> {
        let bags = sequences
            .iter()
            .map(|classes| {
                let label = eval_task(task, &ClassMultiset::from_classes(classes)?)?;
                Ok(Bag {
                    instances: classes.iter().map(|&c| Instance::symbolic(c)).collect(),
                    label,
                })
            })
            .collect::<Result<_, DataError>>()?;
        Ok(Self {
            name,
            bags,
            source: Source::Symbolic,
        })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn mode(&self) -> Mode {
        match self.source {
            Source::Symbolic => Mode::Symbolic,
            Source::Image(_) => Mode::Image,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.source {
            Source::Symbolic => NUM_CLASSES,
            Source::Image(p) => p.pixels_per_image(),
        }
    }

    /// Feature vector of an instance of this split.
    pub fn features<'a>(&'a self, inst: &'a Instance) -> &'a [f64] {
        match (&self.source, inst.image, &inst.noisy) {
            (Source::Image(pools), Some(id), _) => pools
                .split(self.name)
                .image(id)
                .expect("image ids are validated on construction"),
            (_, _, Some(noisy)) => noisy,
            _ => &ONE_HOT[inst.class as usize],
        }
    }

    pub fn bag_features<'a>(&'a self, bag: &'a Bag) -> Vec<&'a [f64]> {
        bag.instances.iter().map(|i| self.features(i)).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.bags.iter().map(Bag::target).collect()
    }

    pub fn label_summary(&self) -> Summary {
        Summary::of(&self.labels())
    }

    /// A split over `bags` that featurizes like this one.
    pub fn with_bags(&self, bags: Vec<Bag>) -> Split {
        Split {
            name: self.name,
            bags,
            source: self.source.clone(),
        }
    }
}

/// Feature vector of a single instance: a (possibly noisy) one-hot class
/// vector in symbolic mode, or the image's scaled pixels in image mode.
pub fn featurize(inst: &Instance, pools: Option<&ImagePools>) -> Result<Vec<f64>, DataError> {
    if inst.class as usize >= NUM_CLASSES {
        return Err(crate::oracle::OracleError::InvalidClass(inst.class).into());
    }
    match (inst.image, pools) {
        (Some(id), Some(pools)) => SplitName::ALL
            .iter()
            .find_map(|&s| pools.split(s).image(id))
            .map(<[f64]>::to_vec)
            .ok_or_else(|| DataError::Pool(format!("no image with id {id}"))),
        (Some(id), None) => Err(DataError::Pool(format!("image {id} requested without loaded pools"))),
        (None, _) => Ok(inst
            .noisy
            .as_deref()
            .map_or_else(|| ONE_HOT[inst.class as usize].to_vec(), <[f64]>::to_vec)),
    }
}

/// Generated or loaded bags of all three splits.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub task: TaskSpec,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.train.feature_dim()
    }
}

fn stream_rng(seed: u64, domain: u64, split: SplitName, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 60) | (split.index() << 56) | index as u64);
    rng
}

fn attach_noise(split: &mut Split, seed: u64, eta: f64) {
    if eta <= 0.0 || split.mode() != Mode::Symbolic {
        return;
    }
    for (b, bag) in split.bags.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, STREAM_NOISE, split.name, b);
        for inst in &mut bag.instances {
            let mut v = ONE_HOT[inst.class as usize];
            for x in &mut v {
                *x += rng.gen_range(-eta..=eta);
            }
            inst.noisy = Some(Box::new(v));
        }
    }
}

fn resolve_pools(spec: &DatasetSpec, pools: Option<Arc<ImagePools>>) -> Result<Source, DataError> {
    match spec.mode {
        Mode::Symbolic => Ok(Source::Symbolic),
        Mode::Image => match pools {
            Some(p) => Ok(Source::Image(p)),
            None => {
                let dir = spec.image_root().ok_or_else(|| {
                    DataError::Spec(format!(
                        "image mode needs `image_dir` or the {DATA_DIR_ENV} environment variable"
                    ))
                })?;
                Ok(Source::Image(Arc::new(ImagePools::load_dir(&dir, DEFAULT_VAL_HOLDOUT)?)))
            }
        },
    }
}

/// Generates all three splits. Every bag is drawn from its own seeded RNG
/// stream, so bags can be produced independently and in any order.
pub fn generate_dataset(spec: &DatasetSpec, pools: Option<Arc<ImagePools>>) -> Result<Dataset, DataError> {
    spec.validate()?;
    let task = spec.resolve_task()?;
    let source = resolve_pools(spec, pools)?;
    let (lo, hi) = task.class_range;

    let mut splits = Vec::with_capacity(3);
    for name in SplitName::ALL {
        let pool = match &source {
            Source::Image(p) => Some(p.split(name)),
            Source::Symbolic => None,
        };
        let mut bags = Vec::with_capacity(spec.counts.get(name));
        for i in 0..spec.counts.get(name) {
            let mut rng = stream_rng(spec.seed, STREAM_BAGS, name, i);
            let size = spec.set_size.sample(&mut rng);
            let mut instances = Vec::with_capacity(size);
            for _ in 0..size {
                let class = rng.gen_range(lo..=hi);
                let inst = match pool {
                    None => Instance::symbolic(class),
                    Some(pool) => {
                        let ids = pool.ids_of_class(class);
                        if ids.is_empty() {
                            return Err(DataError::ClassAbsent { class, split: name });
                        }
                        Instance::with_image(class, ids[rng.gen_range(0..ids.len())])
                    }
                };
                instances.push(inst);
            }
            let classes: Vec<u8> = instances.iter().map(|i| i.class).collect();
            let label = eval_task(&task, &ClassMultiset::from_classes(&classes)?)?;
            bags.push(Bag { instances, label });
        }
        let mut split = Split {
            name,
            bags,
            source: source.clone(),
        };
        attach_noise(&mut split, spec.seed, spec.noise);
        splits.push(split);
    }
    let mut it = splits.into_iter();
    let mut spec = spec.clone();
    spec.pair_set = Some(task.pair_set.clone());
    Ok(Dataset {
        spec,
        task,
        train: it.next().unwrap(),
        val: it.next().unwrap(),
        test: it.next().unwrap(),
    })
}

#[derive(Serialize, Deserialize)]
struct BagRecord {
    classes: Vec<u8>,
    label: u64,
    img_idx: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub split: SplitName,
    pub file: String,
    pub bags: usize,
    pub sha256: String,
}

/// Sidecar describing a saved dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub oracle_version: u32,
    pub spec: DatasetSpec,
    /// Synergy pairs, sorted.
    pub pair_set: Vec<[u8; 2]>,
    pub task: TaskSpec,
    pub files: Vec<FileEntry>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

fn encode_split(split: &Split) -> String {
    let mut out = String::new();
    for bag in &split.bags {
        let rec = BagRecord {
            classes: bag.classes(),
            label: bag.label,
            img_idx: bag
                .instances
                .iter()
                .map(|i| i.image.map_or(-1, i64::from))
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("bag records serialize"));
        out.push('\n');
    }
    out
}

/// Writes `manifest.json` and one JSON Lines file per split into `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<Manifest, DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut files = Vec::new();
    for name in SplitName::ALL {
        let split = dataset.split(name);
        let body = encode_split(split);
        let file = format!("{name}.jsonl");
        let path = dir.join(&file);
        fs::write(&path, body.as_bytes()).map_err(|e| DataError::io(&path, e))?;
        files.push(FileEntry {
            split: name,
            file,
            bags: split.len(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        oracle_version: ORACLE_VERSION,
        spec: dataset.spec.clone(),
        pair_set: dataset.task.pair_set.clone(),
        task: dataset.task.clone(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DataError::Version {
            what: "dataset format",
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.oracle_version != ORACLE_VERSION {
        return Err(DataError::Version {
            what: "oracle",
            found: manifest.oracle_version,
            expected: ORACLE_VERSION,
        });
    }
    manifest.task.validate()?;
    Ok(manifest)
}

/// Loads a dataset saved by [`save_dataset`], loading image pools from the
/// spec's image directory when the dataset is in image mode.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    load_dataset_with_pools(dir, None)
}

pub fn load_dataset_with_pools(dir: &Path, pools: Option<Arc<ImagePools>>) -> Result<Dataset, DataError> {
    let manifest = read_manifest(dir)?;
    let source = resolve_pools(&manifest.spec, pools)?;
    let task = manifest.task.clone();

    let mut splits = Vec::new();
    for name in SplitName::ALL {
        let entry = manifest
            .files
            .iter()
            .find(|f| f.split == name)
            .ok_or_else(|| DataError::Manifest(format!("no file listed for split {name}")))?;
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| DataError::io(&path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| DataError::Line {
            file: entry.file.clone(),
            line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
            reason: "invalid UTF-8".into(),
        })?;
        let pool = match &source {
            Source::Image(p) => Some(p.split(name)),
            Source::Symbolic => None,
        };
        let mut bags = Vec::with_capacity(entry.bags);
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |reason: String| DataError::Line {
                file: entry.file.clone(),
                line: line_no,
                reason,
            };
            let rec: BagRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if rec.img_idx.len() != rec.classes.len() {
                return Err(bad("img_idx and classes differ in length".into()));
            }
            let mut instances = Vec::with_capacity(rec.classes.len());
            for (&class, &img) in rec.classes.iter().zip(&rec.img_idx) {
                let inst = match (pool, img) {
                    (None, -1) => Instance::symbolic(class),
                    (Some(pool), id) if id >= 0 => {
                        let id = u32::try_from(id).map_err(|_| bad(format!("image id {id} out of range")))?;
                        match pool.label(id) {
                            Some(l) if l == class => Instance::with_image(class, id),
                            Some(l) => return Err(bad(format!("image {id} has class {l}, not {class}"))),
                            None => return Err(bad(format!("image {id} is not in the {name} pool"))),
                        }
                    }
                    (_, id) => return Err(bad(format!("image id {id} does not match the dataset mode"))),
                };
                instances.push(inst);
            }
            let multiset = ClassMultiset::from_classes(&rec.classes).map_err(|e| bad(e.to_string()))?;
            let expected = eval_task(&task, &multiset).map_err(|e| bad(e.to_string()))?;
            if expected != rec.label {
                return Err(DataError::LabelMismatch {
                    file: entry.file.clone(),
                    line: line_no,
                    stored: rec.label,
                    expected,
                });
            }
            bags.push(Bag {
                instances,
                label: rec.label,
            });
        }
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(DataError::Checksum {
                file: entry.file.clone(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        if bags.len() != entry.bags {
            return Err(DataError::Manifest(format!(
                "{} holds {} bags, manifest says {}",
                entry.file,
                bags.len(),
                entry.bags
            )));
        }
        let mut split = Split {
            name,
            bags,
            source: source.clone(),
        };
        attach_noise(&mut split, manifest.spec.seed, manifest.spec.noise);
        splits.push(split);
    }
    let mut it = splits.into_iter();
    Ok(Dataset {
        spec: manifest.spec,
        task,
        train: it.next().unwrap(),
        val: it.next().unwrap(),
        test: it.next().unwrap(),
    })
}
