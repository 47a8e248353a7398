//! Image pools, bag generation, featurization, and dataset persistence.

mod dataset;
pub mod idx;
mod pool;

use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::oracle::OracleError;

pub use dataset::{
    featurize, generate_dataset, load_dataset, load_dataset_with_pools, read_manifest, save_dataset, Bag,
    Dataset, DatasetSpec, FileEntry, Instance, Manifest, Mode, SetSize, Split, SplitCounts,
    FORMAT_VERSION,
};
pub use idx::{parse_idx, IdxData};
pub use pool::{ImagePool, ImagePools, DEFAULT_VAL_HOLDOUT};

/// Environment variable naming the default root for image corpora and
/// generated datasets.
pub const DATA_DIR_ENV: &str = "CAPNET_DATA_DIR";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("IDX parse error at byte {offset}: {reason}")]
    Idx { offset: usize, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("image pool: {0}")]
    Pool(String),
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("class {class} has no images in the {split} pool")]
    ClassAbsent { class: u8, split: SplitName },
    #[error("{file}:{line}: {reason}")]
    Line {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: stored label {stored} but the oracle gives {expected}")]
    LabelMismatch {
        file: String,
        line: usize,
        stored: u64,
        expected: u64,
    },
    #[error("{file}: checksum mismatch (manifest {expected}, file {actual})")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(DataError::Spec(format!("unknown split {s:?}"))),
        }
    }
}
