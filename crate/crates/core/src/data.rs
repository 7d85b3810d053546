//! Datasets of precomputed visual features with per-class semantic
//! attributes, the Gaussian-cluster oracle, and mini-batch iteration.
//!
//! A dataset directory holds `meta.json` plus raw row-major little-endian
//! matrices: `*_X.f32` for features, `*_y.i32` for labels and
//! `attributes.f32` with one row per class id.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const META_FILE: &str = "meta.json";
pub const TRAIN_X: &str = "train_X.f32";
pub const TRAIN_Y: &str = "train_y.i32";
pub const TEST_SEEN_X: &str = "test_seen_X.f32";
pub const TEST_SEEN_Y: &str = "test_seen_y.i32";
pub const TEST_UNSEEN_X: &str = "test_unseen_X.f32";
pub const TEST_UNSEEN_Y: &str = "test_unseen_y.i32";
pub const ATTRIBUTES: &str = "attributes.f32";

/// Class identifier; indexes rows of the attribute matrix.
pub type ClassId = usize;

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub name: Option<String>,
    pub feature_dim: usize,
    pub attribute_dim: usize,
    /// Rows of `attributes.f32`; defaults to `|seen| + |unseen|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
    pub n_train: usize,
    pub n_test_seen: usize,
    pub n_test_unseen: usize,
}

impl DatasetMeta {
    pub fn class_count(&self) -> usize {
        self.num_classes
            .unwrap_or(self.seen_classes.len() + self.unseen_classes.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub visual_train: Array2<f64>,
    pub labels_train: Vec<ClassId>,
    pub visual_test_seen: Array2<f64>,
    pub labels_test_seen: Vec<ClassId>,
    pub visual_test_unseen: Array2<f64>,
    pub labels_test_unseen: Vec<ClassId>,
    /// `[C_total × L]`, row `c` is the semantic vector of class `c`.
    pub attributes: Array2<f64>,
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
}

impl DatasetBundle {
    pub fn feature_dim(&self) -> usize {
        self.visual_train.ncols()
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.attributes.nrows()
    }

    /// Seen and unseen classes in ascending id order.
    pub fn all_classes(&self) -> Vec<ClassId> {
        let mut all: Vec<_> = self
            .seen_classes
            .iter()
            .chain(&self.unseen_classes)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }

    /// Attribute rows for each label, `[labels.len() × L]`.
    pub fn attributes_for(&self, labels: &[ClassId]) -> Array2<f64> {
        self.attributes.select(Axis(0), labels)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.feature_dim();
        let l = self.attribute_dim();
        if k == 0 || l == 0 {
            return Err(Error::validation("feature and attribute dims must be >= 1"));
        }
        let seen: BTreeSet<_> = self.seen_classes.iter().copied().collect();
        let unseen: BTreeSet<_> = self.unseen_classes.iter().copied().collect();
        if seen.len() != self.seen_classes.len() || unseen.len() != self.unseen_classes.len() {
            return Err(Error::validation("duplicate class id in class partition"));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::validation(format!(
                "class {c} is listed as both seen and unseen"
            )));
        }
        if let Some(c) = seen.iter().chain(&unseen).find(|&&c| c >= self.class_count()) {
            return Err(Error::validation(format!(
                "class {c} has no attribute row ({} rows)",
                self.class_count()
            )));
        }
        let splits: [(&str, &Array2<f64>, &[ClassId], &BTreeSet<ClassId>); 3] = [
            ("train", &self.visual_train, &self.labels_train, &seen),
            ("test_seen", &self.visual_test_seen, &self.labels_test_seen, &seen),
            ("test_unseen", &self.visual_test_unseen, &self.labels_test_unseen, &unseen),
        ];
        for (split, x, y, allowed) in splits {
            if x.ncols() != k {
                return Err(Error::validation(format!(
                    "{split} features have {} columns, expected {k}",
                    x.ncols()
                )));
            }
            if x.nrows() != y.len() {
                return Err(Error::validation(format!(
                    "{split} has {} feature rows but {} labels",
                    x.nrows(),
                    y.len()
                )));
            }
            if let Some(bad) = y.iter().find(|c| !allowed.contains(c)) {
                return Err(Error::validation(format!(
                    "{split} label {bad} is outside its class partition"
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{split} features contain NaN/Inf")));
            }
        }
        if self.attributes.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("attributes contain NaN/Inf"));
        }
        Ok(())
    }

    /// Divide every feature column by its maximum absolute value over the
    /// training split (columns that are all zero are left alone).
    pub fn normalize_features(&mut self) {
        let scale: Array1<f64> = self
            .visual_train
            .map_axis(Axis(0), |col| col.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .mapv(|m| if m > 0.0 { 1.0 / m } else { 1.0 });
        for x in [
            &mut self.visual_train,
            &mut self.visual_test_seen,
            &mut self.visual_test_unseen,
        ] {
            *x *= &scale;
        }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: Some(self.name.clone()),
            feature_dim: self.feature_dim(),
            attribute_dim: self.attribute_dim(),
            num_classes: Some(self.class_count()),
            seen_classes: self.seen_classes.clone(),
            unseen_classes: self.unseen_classes.clone(),
            n_train: self.labels_train.len(),
            n_test_seen: self.labels_test_seen.len(),
            n_test_unseen: self.labels_test_unseen.len(),
        }
    }

    /// Write the bundle in the dataset directory format. Values are stored
    /// as 32-bit floats.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::json(META_FILE, e))?;
        write_file(&dir.join(META_FILE), meta.as_bytes())?;
        write_f32_matrix(&dir.join(TRAIN_X), &self.visual_train)?;
        write_labels(&dir.join(TRAIN_Y), &self.labels_train)?;
        write_f32_matrix(&dir.join(TEST_SEEN_X), &self.visual_test_seen)?;
        write_labels(&dir.join(TEST_SEEN_Y), &self.labels_test_seen)?;
        write_f32_matrix(&dir.join(TEST_UNSEEN_X), &self.visual_test_unseen)?;
        write_labels(&dir.join(TEST_UNSEEN_Y), &self.labels_test_unseen)?;
        write_f32_matrix(&dir.join(ATTRIBUTES), &self.attributes)?;
        Ok(())
    }
}

/// Load a dataset directory. `split_name` selects a subdirectory of
/// `root`; pass an empty string to load `root` itself.
pub fn load_dataset(root: &Path, split_name: &str) -> Result<DatasetBundle> {
    let dir = if split_name.is_empty() {
        root.to_path_buf()
    } else {
        root.join(split_name)
    };
    let meta_path = dir.join(META_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta =
        serde_json::from_slice(&meta_bytes).map_err(|e| Error::json(META_FILE, e))?;

    let (k, l) = (meta.feature_dim, meta.attribute_dim);
    let bundle = DatasetBundle {
        name: meta
            .name
            .clone()
            .or_else(|| (!split_name.is_empty()).then(|| split_name.to_string()))
            .unwrap_or_else(|| "dataset".to_string()),
        visual_train: read_f32_matrix(&dir, TRAIN_X, meta.n_train, k)?,
        labels_train: read_labels(&dir, TRAIN_Y, meta.n_train)?,
        visual_test_seen: read_f32_matrix(&dir, TEST_SEEN_X, meta.n_test_seen, k)?,
        labels_test_seen: read_labels(&dir, TEST_SEEN_Y, meta.n_test_seen)?,
        visual_test_unseen: read_f32_matrix(&dir, TEST_UNSEEN_X, meta.n_test_unseen, k)?,
        labels_test_unseen: read_labels(&dir, TEST_UNSEEN_Y, meta.n_test_unseen)?,
        attributes: read_f32_matrix(&dir, ATTRIBUTES, meta.class_count(), l)?,
        seen_classes: meta.seen_classes,
        unseen_classes: meta.unseen_classes,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_payload(dir: &Path, file: &str, expected_values: usize) -> Result<Vec<[u8; 4]>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != expected_values * 4 {
        return Err(Error::format(
            file,
            format!(
                "payload holds {} values, metadata implies {expected_values}",
                bytes.len() as f64 / 4.0
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect())
}

pub fn read_f32_matrix(dir: &Path, file: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let values: Vec<f64> = read_payload(dir, file, rows * cols)?
        .into_iter()
        .map(|b| f64::from(f32::from_le_bytes(b)))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn read_labels(dir: &Path, file: &str, rows: usize) -> Result<Vec<ClassId>> {
    read_payload(dir, file, rows)?
        .into_iter()
        .map(|b| {
            let v = i32::from_le_bytes(b);
            usize::try_from(v).map_err(|_| Error::format(file, format!("negative label {v}")))
        })
        .collect()
}

pub fn write_f32_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let bytes: Vec<u8> = m
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    write_file(path, &bytes)
}

pub fn write_labels(path: &Path, labels: &[ClassId]) -> Result<()> {
    let mut bytes = Vec::with_capacity(labels.len() * 4);
    for &c in labels {
        let v = i32::try_from(c)
            .map_err(|_| Error::validation(format!("label {c} does not fit in i32")))?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &bytes)
}

/// Parameters of the Gaussian-cluster oracle dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub feature_dim: usize,
    pub attribute_dim: usize,
    pub samples_per_class: usize,
    pub cluster_std: f64,
    pub projection_seed: u64,
    pub noise_seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_seen_classes == 0 || self.n_unseen_classes == 0 || self.samples_per_class == 0 {
            return Err(Error::validation("synthetic class and sample counts must be >= 1"));
        }
        if self.attribute_dim == 0 || self.feature_dim < self.attribute_dim {
            return Err(Error::validation(
                "synthetic dims must satisfy feature_dim >= attribute_dim >= 1",
            ));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::validation("cluster_std must be positive and finite"));
        }
        Ok(())
    }
}

/// The oracle's ground truth: class attributes and the linear map from
/// attribute space to class means.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub attributes: Array2<f64>,
    /// `[L × K]`; class mean is `a_c · projection`.
    pub projection: Array2<f64>,
}

impl SyntheticTruth {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let classes = spec.n_seen_classes + spec.n_unseen_classes;
        let mut rng = rng::seeded(spec.projection_seed);
        let attributes = Array2::from_shape_simple_fn((classes, spec.attribute_dim), || {
            rng.random::<f64>()
        });
        let projection = Array2::from_shape_simple_fn((spec.attribute_dim, spec.feature_dim), || {
            rng.random::<f64>()
        });
        Self {
            attributes,
            projection,
        }
    }

    /// `[C × K]` matrix of class means.
    pub fn class_means(&self) -> Array2<f64> {
        self.attributes.dot(&self.projection)
    }
}

/// Build the oracle dataset. Seen classes are ids `0..n_seen`, unseen
/// classes follow. Every seen class gets `samples_per_class` training rows
/// and as many seen-test rows; unseen classes get test rows only.
pub fn make_synthetic_dataset(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let truth = SyntheticTruth::new(spec);
    let means = truth.class_means();
    let mut rng = rng::seeded(spec.noise_seed);
    let n = spec.samples_per_class;

    let mut draw = |classes: std::ops::Range<usize>| {
        let labels: Vec<ClassId> = classes.flat_map(|c| std::iter::repeat_n(c, n)).collect();
        let noise = rng::standard_normal(&mut rng, labels.len(), spec.feature_dim);
        let x = means.select(Axis(0), &labels) + noise * spec.cluster_std;
        (x, labels)
    };
    let seen = 0..spec.n_seen_classes;
    let unseen = spec.n_seen_classes..spec.n_seen_classes + spec.n_unseen_classes;
    let (visual_train, labels_train) = draw(seen.clone());
    let (visual_test_seen, labels_test_seen) = draw(seen.clone());
    let (visual_test_unseen, labels_test_unseen) = draw(unseen.clone());

    let bundle = DatasetBundle {
        name: "synthetic".to_string(),
        visual_train,
        labels_train,
        visual_test_seen,
        labels_test_seen,
        visual_test_unseen,
        labels_test_unseen,
        attributes: truth.attributes,
        seen_classes: seen.collect(),
        unseen_classes: unseen.collect(),
    };
    bundle.validate()?;
    Ok(bundle)
}

/// One training mini-batch. `noise` feeds the first pass through the
/// semantic→visual generator, `cycle_noise` the second (reconstructed) pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub visual: Array2<f64>,
    pub attributes: Array2<f64>,
    pub labels: Vec<ClassId>,
    pub noise: Array2<f64>,
    pub cycle_noise: Array2<f64>,
}

impl FeatureBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shuffled single-epoch pass over the training split.
pub struct BatchIter<'a> {
    bundle: &'a DatasetBundle,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    truncated: bool,
    rng: Rng,
}

impl BatchIter<'_> {
    /// True when the requested batch size exceeded the training split and
    /// the epoch collapsed into one smaller batch.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

pub fn batch_iterator(bundle: &DatasetBundle, batch_size: usize, epoch_seed: u64) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let n = bundle.labels_train.len();
    let mut rng = rng::seeded(epoch_seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let truncated = batch_size > n;
    if truncated {
        log::warn!("batch size {batch_size} exceeds {n} training rows; using one batch of {n}");
    }
    BatchIter {
        bundle,
        order,
        pos: 0,
        batch_size: batch_size.min(n.max(1)),
        truncated,
        rng,
    }
}

impl Iterator for BatchIter<'_> {
    type Item = FeatureBatch;

    fn next(&mut self) -> Option<FeatureBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows = &self.order[self.pos..end];
        self.pos = end;
        let labels: Vec<ClassId> = rows.iter().map(|&r| self.bundle.labels_train[r]).collect();
        let l = self.bundle.attribute_dim();
        Some(FeatureBatch {
            visual: self.bundle.visual_train.select(Axis(0), rows),
            attributes: self.bundle.attributes_for(&labels),
            noise: rng::standard_normal(&mut self.rng, rows.len(), l),
            cycle_noise: rng::standard_normal(&mut self.rng, rows.len(), l),
            labels,
        })
    }
}
