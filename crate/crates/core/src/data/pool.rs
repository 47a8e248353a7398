use std::fs;
use std::path::Path;

use super::idx::{parse_idx, IdxData};
use super::{DataError, SplitName};

/// Images held back from the end of the training file to form the
/// validation pool.
pub const DEFAULT_VAL_HOLDOUT: usize = 10_000;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Labelled images of one split.
///
/// Images are addressed by global ids: training-file images keep their
/// file index, test-file images are offset by the training-file size. The
/// pools of different splits therefore never share an id.
#[derive(Clone, Debug)]
pub struct ImagePool {
    pub split: SplitName,
    pub pixels_per_image: usize,
    images: Vec<f64>,
    labels: Vec<u8>,
    first_id: u32,
    by_class: Vec<Vec<u32>>,
}

impl ImagePool {
    pub fn new(
        split: SplitName,
        pixels_per_image: usize,
        images: Vec<f64>,
        labels: Vec<u8>,
        first_id: u32,
    ) -> Result<Self, DataError> {
        if images.len() != labels.len() * pixels_per_image {
            return Err(DataError::Pool(format!(
                "{split} pool has {} labels but {} pixel values",
                labels.len(),
                images.len()
            )));
        }
        if let Some(p) = images.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(DataError::Pool(format!("pixel value {p} outside [0, 1]")));
        }
        let mut by_class = vec![Vec::new(); 10];
        for (i, &l) in labels.iter().enumerate() {
            let bucket = by_class
                .get_mut(l as usize)
                .ok_or_else(|| DataError::Pool(format!("label {l} outside 0..=9")))?;
            bucket.push(first_id + i as u32);
        }
        Ok(Self {
            split,
            pixels_per_image,
            images,
            labels,
            first_id,
            by_class,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Global ids of the images of `class`.
    pub fn ids_of_class(&self, class: u8) -> &[u32] {
        self.by_class.get(class as usize).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, id: u32) -> bool {
        id >= self.first_id && ((id - self.first_id) as usize) < self.labels.len()
    }

    pub fn label(&self, id: u32) -> Option<u8> {
        self.contains(id)
            .then(|| self.labels[(id - self.first_id) as usize])
    }

    pub fn image(&self, id: u32) -> Option<&[f64]> {
        self.contains(id).then(|| {
            let i = (id - self.first_id) as usize * self.pixels_per_image;
            &self.images[i..i + self.pixels_per_image]
        })
    }
}

/// Train, validation and test pools drawn from one image corpus.
#[derive(Clone, Debug)]
pub struct ImagePools {
    pub train: ImagePool,
    pub val: ImagePool,
    pub test: ImagePool,
}

impl ImagePools {
    /// Splits the training file into train and validation pools; the test
    /// file becomes the test pool.
    pub fn from_idx(
        train_images: IdxData,
        train_labels: IdxData,
        test_images: IdxData,
        test_labels: IdxData,
        val_holdout: usize,
    ) -> Result<Self, DataError> {
        let (tr_pixels, tr_dim, tr_labels) = unpack(train_images, train_labels)?;
        let (te_pixels, te_dim, te_labels) = unpack(test_images, test_labels)?;
        if tr_dim != te_dim {
            return Err(DataError::Pool(format!(
                "train images have {tr_dim} pixels, test images {te_dim}"
            )));
        }
        if val_holdout >= tr_labels.len() {
            return Err(DataError::Pool(format!(
                "validation holdout {val_holdout} leaves no training images out of {}",
                tr_labels.len()
            )));
        }
        let n_train = tr_labels.len() - val_holdout;
        let (train_px, val_px) = tr_pixels.split_at(n_train * tr_dim);
        let (train_lb, val_lb) = tr_labels.split_at(n_train);
        let test_offset = tr_labels.len() as u32;
        Ok(Self {
            train: ImagePool::new(SplitName::Train, tr_dim, train_px.to_vec(), train_lb.to_vec(), 0)?,
            val: ImagePool::new(
                SplitName::Val,
                tr_dim,
                val_px.to_vec(),
                val_lb.to_vec(),
                n_train as u32,
            )?,
            test: ImagePool::new(SplitName::Test, te_dim, te_pixels, te_labels, test_offset)?,
        })
    }

    /// Loads the four standard IDX files from `dir`.
    pub fn load_dir(dir: &Path, val_holdout: usize) -> Result<Self, DataError> {
        let read = |name: &str| -> Result<IdxData, DataError> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| DataError::io(&path, e))?;
            parse_idx(&bytes)
        };
        Self::from_idx(
            read(TRAIN_IMAGES)?,
            read(TRAIN_LABELS)?,
            read(TEST_IMAGES)?,
            read(TEST_LABELS)?,
            val_holdout,
        )
    }

    pub fn split(&self, split: SplitName) -> &ImagePool {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn pixels_per_image(&self) -> usize {
        self.train.pixels_per_image
    }
}

fn unpack(images: IdxData, labels: IdxData) -> Result<(Vec<f64>, usize, Vec<u8>), DataError> {
    match (images, labels) {
        (
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            },
            IdxData::Labels(labels),
        ) => {
            if count != labels.len() {
                return Err(DataError::Pool(format!(
                    "{count} images but {} labels",
                    labels.len()
                )));
            }
            Ok((pixels, rows * cols, labels))
        }
        _ => Err(DataError::Pool("expected an image file and a label file".into())),
    }
}
