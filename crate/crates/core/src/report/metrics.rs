use serde::Serialize;

use crate::error::{Error, Result};

/// Two-class scores for one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub total: usize,
    pub accuracy: f64,
    /// Indexed by class.
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

pub fn compute_metrics(predicted: &[usize], truths: &[usize]) -> Result<MetricsRow> {
    if predicted.len() != truths.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} truths",
            predicted.len(),
            truths.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Usage("metrics need at least one prediction".into()));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &t) in predicted.iter().zip(truths) {
        if p > 1 || t > 1 {
            return Err(Error::Usage(format!("labels must be 0 or 1, got truth {t} predicted {p}")));
        }
        confusion[t][p] += 1;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let total = predicted.len();
    let precision = [0, 1].map(|c| ratio(confusion[c][c], confusion[0][c] + confusion[1][c]));
    let recall = [0, 1].map(|c| ratio(confusion[c][c], confusion[c][0] + confusion[c][1]));
    Ok(MetricsRow {
        total,
        accuracy: ratio(confusion[0][0] + confusion[1][1], total),
        precision,
        recall,
        confusion,
    })
}

/// ROC curve as `(FPR, TPR)` points from `(0,0)` to `(1,1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps the threshold `score >= t` over every distinct score, from `+inf` down to `-inf`.
pub fn roc_points(scores: &[f64], truths: &[usize]) -> Result<RocCurve> {
    if scores.len() != truths.len() {
        return Err(Error::Usage(format!("{} scores for {} truths", scores.len(), truths.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("ROC scores contain NaN".into()));
    }
    let pos = truths.iter().filter(|&&t| t == 1).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Usage("ROC needs both classes in the truth labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truths[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    points.push((1.0, 1.0));
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}
