use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::pca::{pca1_project, Pca1};
use super::{Classifier, Prediction};
use crate::autodiff::{Adam, ParamSet, Tensor};
use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::quantum::{clamp_prob, Gate, Statevector};

/// `RY(w)·RY(x)|0⟩`, returning `(P0, P1)`.
pub fn pure_qnn_forward(x: f64, w: f64) -> Result<(f64, f64)> {
    let p1 = Statevector::zero().run(&[Gate::Ry(x), Gate::Ry(w)])?.prob1();
    Ok((1.0 - p1, p1))
}

/// `dP1/dw` by the two-term shift rule.
fn shift_grad(x: f64, w: f64) -> Result<f64> {
    let (_, plus) = pure_qnn_forward(x, w + FRAC_PI_2)?;
    let (_, minus) = pure_qnn_forward(x, w - FRAC_PI_2)?;
    Ok((plus - minus) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QnnConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for QnnConfig {
    fn default() -> Self {
        QnnConfig { lr: 0.05, epochs: 100 }
    }
}

/// Single-qubit classifier over PCA-1 angles with one trainable rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Qnn {
    pub pca: Pca1,
    pub w: f64,
    /// Mean NLL per epoch.
    pub losses: Vec<f64>,
}

impl Qnn {
    /// Full-batch parameter-shift gradients with Adam.
    pub fn fit_angles(angles: &[f64], labels: &[usize], cfg: &QnnConfig) -> Result<(f64, Vec<f64>)> {
        if angles.is_empty() || angles.len() != labels.len() {
            return Err(Error::Data(format!(
                "QNN needs matching non-empty inputs, got {} angles and {} labels",
                angles.len(),
                labels.len()
            )));
        }
        let mut params = ParamSet::new();
        let id = params.insert("qnn.w", Tensor::zeros(vec![1]));
        let mut adam = Adam::new(cfg.lr);
        let n = angles.len() as f64;
        let mut losses = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let w = params.get(id).data()[0];
            let (mut loss, mut grad) = (0.0, 0.0);
            for (&x, &y) in angles.iter().zip(labels) {
                let (p0, p1) = pure_qnn_forward(x, w)?;
                let (p0c, p1c) = (clamp_prob(p0), clamp_prob(p1));
                let dp1 = shift_grad(x, w)?;
                if y == 1 {
                    loss -= p1c.ln();
                    if p1c == p1 {
                        grad -= dp1 / p1c;
                    }
                } else {
                    loss -= p0c.ln();
                    if p0c == p0 {
                        grad += dp1 / p0c;
                    }
                }
            }
            losses.push(loss / n);
            params.get_mut(id).accumulate_grad(&[grad / n])?;
            adam.step(&mut params)?;
        }
        Ok((params.get(id).data()[0], losses))
    }

    pub fn fit(images: &[LabeledImage], cfg: &QnnConfig) -> Result<Self> {
        let rows: Vec<Vec<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
        let (pca, angles) = pca1_project(&rows)?;
        let labels: Vec<usize> = images.iter().map(|im| im.label).collect();
        let (w, losses) = Self::fit_angles(&angles, &labels, cfg)?;
        Ok(Qnn { pca, w, losses })
    }
}

impl Classifier for Qnn {
    fn name(&self) -> &str {
        "qnn"
    }

    fn predict(&self, images: &[LabeledImage]) -> Result<Vec<Prediction>> {
        images
            .iter()
            .map(|im| {
                if im.pixels.len() != self.pca.mean.len() {
                    return Err(Error::dim("feature axis", self.pca.mean.len(), im.pixels.len()));
                }
                let (p0, p1) = pure_qnn_forward(self.pca.angle(&im.pixels), self.w)?;
                Ok(Prediction::from_probs(p0, p1))
            })
            .collect()
    }
}
