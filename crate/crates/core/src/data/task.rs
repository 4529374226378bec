use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::error::{Error, Result};

/// How a two-class task is cut out of a full dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    /// Original class ids mapped to labels 0 and 1.
    pub class_pair: [usize; 2],
    pub samples_per_class: usize,
    /// Fraction of each class that goes to training.
    pub train_fraction: f64,
    /// Injection pool size as a fraction of the training set.
    pub injection_ratio: f64,
    /// Draw the injection pool from these classes instead of `class_pair`.
    pub injection_classes: Option<[usize; 2]>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            name: "mnist".into(),
            class_pair: [0, 1],
            samples_per_class: 100,
            train_fraction: 0.8,
            injection_ratio: 0.5,
            injection_classes: None,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn train_per_class(&self) -> usize {
        (self.samples_per_class as f64 * self.train_fraction).round() as usize
    }

    pub fn test_per_class(&self) -> usize {
        self.samples_per_class - self.train_per_class()
    }

    /// Total injection pool size, `ceil(ρ·|train|)`.
    pub fn pool_size(&self) -> usize {
        (self.injection_ratio * (2 * self.train_per_class()) as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_pair[0] == self.class_pair[1] {
            return Err(Error::Config("class pair must name two different classes".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config("samples_per_class must be at least 2".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.train_per_class() == 0 || self.test_per_class() == 0 {
            return Err(Error::Config(format!(
                "split of {} samples leaves an empty train or test partition",
                self.samples_per_class
            )));
        }
        if !(self.injection_ratio >= 0.0 && self.injection_ratio.is_finite()) {
            return Err(Error::Config(format!("injection_ratio {} must be >= 0", self.injection_ratio)));
        }
        if let Some([a, b]) = self.injection_classes {
            if a == b {
                return Err(Error::Config("injection classes must differ".into()));
            }
        }
        Ok(())
    }
}

/// Train, test and injection partitions with labels already mapped to {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub injection_pool: Vec<LabeledImage>,
    pub spec: DatasetSpec,
}

impl TaskDataset {
    /// Fits statistics on `train` and rewrites every partition with them.
    pub fn standardize(&mut self) -> Result<Standardizer> {
        let st = Standardizer::fit(&self.train)?;
        for im in self
            .train
            .iter_mut()
            .chain(self.test.iter_mut())
            .chain(self.injection_pool.iter_mut())
        {
            st.apply(im)?;
        }
        Ok(st)
    }

    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.train.first().map(LabeledImage::shape)
    }
}

/// Builds a balanced two-class task. Deterministic for a given rng state.
pub fn build_task(full: &[LabeledImage], spec: &DatasetSpec, rng: &mut impl Rng) -> Result<TaskDataset> {
    spec.validate()?;
    let n_train = spec.train_per_class();
    let n_test = spec.test_per_class();
    let pool = spec.pool_size();
    let pool_classes = spec.injection_classes.unwrap_or(spec.class_pair);
    let pool_split = [pool.div_ceil(2), pool / 2];

    let mut demand: BTreeMap<usize, usize> = BTreeMap::new();
    for c in spec.class_pair {
        *demand.entry(c).or_default() += n_train + n_test;
    }
    for (c, n) in pool_classes.iter().zip(pool_split) {
        *demand.entry(*c).or_default() += n;
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = demand.keys().map(|&c| (c, Vec::new())).collect();
    for (i, im) in full.iter().enumerate() {
        if let Some(v) = by_class.get_mut(&im.label) {
            v.push(i);
        }
    }
    for (c, need) in &demand {
        let have = by_class[c].len();
        if have < *need {
            return Err(Error::Data(format!(
                "class {c} needs {need} examples (train, test and injection pool), {have} available"
            )));
        }
    }
    for v in by_class.values_mut() {
        v.shuffle(rng);
    }

    let mut cursor: BTreeMap<usize, usize> = demand.keys().map(|&c| (c, 0)).collect();
    let mut take = |class: usize, n: usize, label: usize| -> Vec<LabeledImage> {
        let at = cursor.get_mut(&class).expect("class was counted");
        let picked = by_class[&class][*at..*at + n]
            .iter()
            .map(|&i| LabeledImage {
                label,
                ..full[i].clone()
            })
            .collect();
        *at += n;
        picked
    };

    let mut train = Vec::with_capacity(2 * n_train);
    let mut test = Vec::with_capacity(2 * n_test);
    for (label, &c) in spec.class_pair.iter().enumerate() {
        train.extend(take(c, n_train, label));
        test.extend(take(c, n_test, label));
    }
    let mut injection_pool = Vec::with_capacity(pool);
    for (label, (&c, n)) in pool_classes.iter().zip(pool_split).enumerate() {
        injection_pool.extend(take(c, n, label));
    }
    train.shuffle(rng);
    test.shuffle(rng);
    injection_pool.shuffle(rng);

    Ok(TaskDataset {
        train,
        test,
        injection_pool,
        spec: spec.clone(),
    })
}

const STD_EPS: f64 = 1e-8;

/// Per-channel affine normalization fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(images: &[LabeledImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Data("cannot fit statistics on an empty partition".into()))?;
        let (c, plane) = (first.channels, first.plane());
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for im in images {
            if im.shape() != first.shape() {
                return Err(Error::dim("image size", first.pixels.len(), im.pixels.len()));
            }
            for (ch, px) in im.pixels.chunks_exact(plane).enumerate() {
                sum[ch] += px.iter().sum::<f64>();
            }
        }
        let count = (images.len() * plane) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        for im in images {
            for (ch, px) in im.pixels.chunks_exact(plane).enumerate() {
                sq[ch] += px.iter().map(|x| (x - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / count).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, im: &mut LabeledImage) -> Result<()> {
        if im.channels != self.mean.len() {
            return Err(Error::dim("channel axis", self.mean.len(), im.channels));
        }
        let plane = im.plane();
        for (ch, px) in im.pixels.chunks_exact_mut(plane).enumerate() {
            let (m, d) = (self.mean[ch], self.std[ch] + STD_EPS);
            px.iter_mut().for_each(|x| *x = (*x - m) / d);
        }
        Ok(())
    }
}
