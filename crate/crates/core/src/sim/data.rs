//! Datasets: IDX and CSV loaders and a synthetic Gaussian-mixture generator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub classes: u32,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u32>, classes: u32) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let width = features.first().map_or(0, Vec::len);
        if features.iter().any(|x| x.len() != width) {
            return Err(Error::Dataset("rows of unequal width".into()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Dataset(format!("label {y} outside 0..{classes}")));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Keeps only the listed classes, relabelled `0..classes.len()` in order.
    pub fn restrict_classes(&self, keep: &[u32]) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (x, &y) in self.features.iter().zip(&self.labels) {
            if let Some(pos) = keep.iter().position(|&k| k == y) {
                features.push(x.clone());
                labels.push(pos as u32);
            }
        }
        Dataset {
            features,
            labels,
            classes: keep.len() as u32,
        }
    }
}

fn read_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("truncated IDX header".into()))
}

/// Parses an IDX file of unsigned bytes. Returns the dimensions and the data.
pub fn parse_idx(buf: &[u8]) -> Result<(Vec<usize>, &[u8])> {
    if buf.len() < 4 || buf[0] != 0 || buf[1] != 0 {
        return Err(Error::Dataset("bad IDX magic".into()));
    }
    if buf[2] != 0x08 {
        return Err(Error::Dataset(format!("IDX element type {:#04x} is not unsigned byte", buf[2])));
    }
    let ndim = buf[3] as usize;
    let dims = (0..ndim)
        .map(|i| read_u32(buf, 4 + 4 * i).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let count: usize = dims.iter().product();
    let data = buf
        .get(start..start + count)
        .ok_or_else(|| Error::Dataset(format!("IDX body shorter than {count} bytes")))?;
    Ok((dims, data))
}

/// Loads an image/label IDX pair (MNIST layout). Pixels are scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img_buf = fs::read(images)?;
    let lab_buf = fs::read(labels)?;
    let (img_dims, pixels) = parse_idx(&img_buf)?;
    let (lab_dims, labs) = parse_idx(&lab_buf)?;
    if img_dims.is_empty() || lab_dims.len() != 1 || img_dims[0] != lab_dims[0] {
        return Err(Error::Dataset(format!(
            "image dims {img_dims:?} do not match label dims {lab_dims:?}"
        )));
    }
    let width: usize = img_dims[1..].iter().product();
    let features = pixels
        .chunks(width.max(1))
        .take(img_dims[0])
        .map(|row| row.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();
    let labels: Vec<u32> = labs.iter().map(|&l| u32::from(l)).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, classes)
}

/// Loads a CSV with a header row: label first, then features.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
        let mut fields = rec.iter();
        let label = fields
            .next()
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Dataset(format!("row {}: bad label", row + 1)))?;
        let x = fields
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Dataset(format!("row {}: {e}", row + 1)))?;
        labels.push(label);
        features.push(x);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, classes)
}

/// Gaussian-mixture classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: u32,
    pub features: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Scale of the class means.
    pub separation: f64,
    /// Per-feature noise standard deviation.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            features: 64,
            train_per_class: 400,
            test_per_class: 100,
            separation: 0.4,
            noise: 1.0,
        }
    }
}

/// Draws `(train, test)` from a mixture with one Gaussian per class. Features
/// are squashed into `[0, 1]` by a logistic map so triggers can use value 1.
pub fn synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 || spec.features == 0 {
        return Err(Error::Dataset("synthetic task needs >= 2 classes and >= 1 feature".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| spec.separation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut draw = |per_class: usize| {
        let mut xs = Vec::with_capacity(per_class * spec.classes as usize);
        let mut ys = Vec::with_capacity(xs.capacity());
        for _ in 0..per_class {
            for (c, mu) in means.iter().enumerate() {
                xs.push(
                    mu.iter()
                        .map(|m| {
                            let v = m + spec.noise * rng.sample::<f64, _>(StandardNormal);
                            1.0 / (1.0 + (-v).exp())
                        })
                        .collect(),
                );
                ys.push(c as u32);
            }
        }
        Dataset::new(xs, ys, spec.classes)
    };
    let train = draw(spec.train_per_class)?;
    let test = draw(spec.test_per_class)?;
    Ok((train, test))
}
