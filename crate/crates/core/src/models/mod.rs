//! The hybrid network, its classical twin and the shallow baselines.

mod checkpoint;
mod network;
mod pca;
mod qnn;
mod svm;

pub use checkpoint::{load_params, save_params};
pub use network::{Forward, HeadKind, Network, NetworkConfig};
pub use pca::{pca1_project, Pca1};
pub use qnn::{pure_qnn_forward, Qnn, QnnConfig};
pub use svm::{
    lssvm_solve, lssvm_system, quantum_kernel, svm_train_pegasos, HybridSvm, KernelMatrix, LinearSvm,
    PegasosConfig,
};

use crate::error::Result;
use crate::data::LabeledImage;

/// A hard label plus a score that increases with confidence in class 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub score: f64,
}

impl Prediction {
    pub fn from_probs(p0: f64, p1: f64) -> Self {
        Prediction {
            label: usize::from(p1 > p0),
            score: p1,
        }
    }

    pub fn from_decision(value: f64) -> Self {
        Prediction {
            label: usize::from(value > 0.0),
            score: value,
        }
    }
}

/// Common prediction surface for every model in the comparison.
pub trait Classifier {
    fn name(&self) -> &str;
    fn predict(&self, images: &[LabeledImage]) -> Result<Vec<Prediction>>;
}

/// Maps labels {0, 1} to {−1, +1}.
pub fn signed_labels(images: &[LabeledImage]) -> Vec<f64> {
    images.iter().map(|im| if im.label == 1 { 1.0 } else { -1.0 }).collect()
}
