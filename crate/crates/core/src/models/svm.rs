use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pca::{pca1_project, Pca1};
use super::{signed_labels, Classifier, Prediction};
use crate::data::LabeledImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PegasosConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PegasosConfig {
    fn default() -> Self {
        PegasosConfig {
            lambda: 1e-3,
            epochs: 20,
            seed: 0,
        }
    }
}

/// `sign(w·x + b)` on flattened pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn fit(images: &[LabeledImage], cfg: &PegasosConfig) -> Result<(Self, Vec<f64>)> {
        let xs: Vec<Vec<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
        svm_train_pegasos(&xs, &signed_labels(images), cfg)
    }
}

impl Classifier for LinearSvm {
    fn name(&self) -> &str {
        "svm"
    }

    fn predict(&self, images: &[LabeledImage]) -> Result<Vec<Prediction>> {
        images
            .iter()
            .map(|im| {
                if im.pixels.len() != self.weights.len() {
                    return Err(Error::dim("feature axis", self.weights.len(), im.pixels.len()));
                }
                Ok(Prediction::from_decision(self.decision(&im.pixels)))
            })
            .collect()
    }
}

fn hinge_objective(svm: &LinearSvm, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * svm.decision(x)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    let reg = svm.weights.iter().map(|w| w * w).sum::<f64>() + svm.bias * svm.bias;
    0.5 * lambda * reg + hinge
}

/// Primal hinge-loss SVM by Pegasos with step `1/(λt)`.
///
/// The bias is carried as an extra constant feature. Returns the averaged
/// iterate and, per epoch, its regularized hinge objective.
pub fn svm_train_pegasos(xs: &[Vec<f64>], ys: &[f64], cfg: &PegasosConfig) -> Result<(LinearSvm, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::Data("SVM training set is empty".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::dim("label count", xs.len(), ys.len()));
    }
    if let Some(y) = ys.iter().find(|y| **y != 1.0 && **y != -1.0) {
        return Err(Error::Data(format!("SVM labels must be ±1, got {y}")));
    }
    if !(cfg.lambda > 0.0) {
        return Err(Error::Config(format!("Pegasos lambda must be positive, got {}", cfg.lambda)));
    }
    let d = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::dim("feature axis", d, bad.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0usize;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let snapshot = |avg: &[f64]| LinearSvm {
        weights: avg[..d].to_vec(),
        bias: avg[d],
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let (x, y) = (&xs[i], ys[i]);
            let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                w.iter_mut().zip(x).for_each(|(v, a)| *v += eta * y * a);
                w[d] += eta * y;
            }
            let k = 1.0 / t as f64;
            avg.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) * k);
        }
        trace.push(hinge_objective(&snapshot(&avg), xs, ys, cfg.lambda));
    }
    Ok((snapshot(&avg), trace))
}

/// Fidelity kernel `|⟨ψ(x)|ψ(y)⟩|²` with `ψ(t) = RY(2t)|0⟩`, which is `cos²(x − y)`.
pub fn quantum_kernel(x: f64, y: f64) -> f64 {
    (x - y).cos().powi(2)
}

/// Dense symmetric Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(points: &[f64], k: impl Fn(f64, f64) -> f64) -> Self {
        let n = points.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = k(points[i], points[j]);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        KernelMatrix { n, entries }
    }

    pub fn quantum(angles: &[f64]) -> Self {
        Self::from_fn(angles, quantum_kernel)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// The LS-SVM system `[[0, 1ᵀ], [1, K + I/γ]] [b; α] = [0; y]`, row-major.
pub fn lssvm_system(k: &KernelMatrix, y: &[f64], gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != k.n {
        return Err(Error::dim("label count", k.n, y.len()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("LS-SVM gamma must be positive, got {gamma}")));
    }
    let m = k.n + 1;
    let mut a = vec![0.0; m * m];
    for i in 1..m {
        a[i] = 1.0;
        a[i * m] = 1.0;
        for j in 1..m {
            a[i * m + j] = k.get(i - 1, j - 1);
        }
        a[i * m + i] += 1.0 / gamma;
    }
    let mut rhs = vec![0.0; m];
    rhs[1..].copy_from_slice(y);
    Ok((a, rhs))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let m = b.len();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))
            .unwrap_or(col);
        if a[piv * m + col].abs() < 1e-13 * scale {
            return Err(Error::Numeric(format!("singular LS-SVM system at column {col}")));
        }
        if piv != col {
            for j in 0..m {
                a.swap(col * m + j, piv * m + j);
            }
            b.swap(col, piv);
        }
        let p = a[col * m + col];
        for row in col + 1..m {
            let f = a[row * m + col] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..m {
                a[row * m + j] -= f * a[col * m + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|j| a[row * m + j] * x[j]).sum();
        x[row] = (b[row] - s) / a[row * m + row];
    }
    Ok(x)
}

/// Returns dual coefficients and bias.
pub fn lssvm_solve(k: &KernelMatrix, y: &[f64], gamma: f64) -> Result<(Vec<f64>, f64)> {
    let (a, rhs) = lssvm_system(k, y, gamma)?;
    let x = solve_dense(a, rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("LS-SVM solution is not finite".into()));
    }
    Ok((x[1..].to_vec(), x[0]))
}

/// LS-SVM with the quantum kernel over halved PCA-1 angles, so the
/// embedded state `RY(θ)|0⟩` stays injective on [−π/2, π/2].
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSvm {
    pub pca: Pca1,
    pub support: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bias: f64,
}

impl HybridSvm {
    pub fn fit(images: &[LabeledImage], gamma: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = images.iter().map(|im| im.pixels.clone()).collect();
        let (pca, angles) = pca1_project(&rows)?;
        let angles: Vec<f64> = angles.iter().map(|a| a / 2.0).collect();
        let (alpha, bias) = lssvm_solve(&KernelMatrix::quantum(&angles), &signed_labels(images), gamma)?;
        Ok(HybridSvm {
            pca,
            support: angles,
            alpha,
            bias,
        })
    }

    pub fn decision_angle(&self, theta: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| a * quantum_kernel(theta, *s))
            .sum::<f64>()
            + self.bias
    }
}

impl Classifier for HybridSvm {
    fn name(&self) -> &str {
        "hybrid_svm"
    }

    fn predict(&self, images: &[LabeledImage]) -> Result<Vec<Prediction>> {
        images
            .iter()
            .map(|im| {
                if im.pixels.len() != self.pca.mean.len() {
                    return Err(Error::dim("feature axis", self.pca.mean.len(), im.pixels.len()));
                }
                Ok(Prediction::from_decision(self.decision_angle(self.pca.angle(&im.pixels) / 2.0)))
            })
            .collect()
    }
}
