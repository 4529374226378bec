use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERS: usize = 1000;

/// Leading principal direction plus the scale that maps training
/// projections onto [−π/2, π/2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca1 {
    pub mean: Vec<f64>,
    pub direction: Vec<f64>,
    /// Variance captured along `direction`.
    pub eigenvalue: f64,
    pub scale: f64,
}

impl Pca1 {
    /// Raw centered projection.
    pub fn project_raw(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.direction)
            .map(|((v, m), d)| (v - m) * d)
            .sum()
    }

    /// Embedding angle, clamped for inputs outside the training range.
    pub fn angle(&self, x: &[f64]) -> f64 {
        (self.project_raw(x) * self.scale).clamp(-FRAC_PI_2, FRAC_PI_2)
    }
}

/// Top principal component by power iteration on `XᵀX / n`.
pub fn pca1_project(rows: &[Vec<f64>]) -> Result<(Pca1, Vec<f64>)> {
    if rows.len() < 2 {
        return Err(Error::Data(format!("PCA needs at least 2 rows, got {}", rows.len())));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::dim("feature axis", d, bad.len()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let cov_apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for r in &centered {
            let s: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
            out.iter_mut().zip(r).for_each(|(o, a)| *o += s * a / n);
        }
        out
    };
    let normalize = |v: &mut Vec<f64>| -> f64 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        norm
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x9CA1);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let mut next = cov_apply(&v);
        let norm = normalize(&mut next);
        if !(norm > 0.0) {
            return Err(Error::Numeric("PCA input has zero variance".into()));
        }
        let sign = if next.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (sign * a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        v = next.into_iter().map(|a| sign * a).collect();
        if delta < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "power iteration did not converge in {MAX_ITERS} iterations"
        )));
    }
    let eigenvalue: f64 = cov_apply(&v).iter().zip(&v).map(|(a, b)| a * b).sum();
    let raw: Vec<f64> = centered
        .iter()
        .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum())
        .collect();
    let max = raw.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let scale = if max > 0.0 { FRAC_PI_2 / max } else { 0.0 };
    let pca = Pca1 {
        mean,
        direction: v,
        eigenvalue,
        scale,
    };
    let angles = raw.iter().map(|p| p * scale).collect();
    Ok((pca, angles))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_a_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let (p, angles) = pca1_project(&rows).unwrap();
        let s = 5f64.sqrt();
        let dot = p.direction[0] / s + p.direction[1] * 2.0 / s;
        assert!((dot.abs() - 1.0).abs() < 1e-6);
        assert!(angles.iter().sum::<f64>().abs() < 1e-9);
        assert!(angles.iter().all(|a| a.abs() <= FRAC_PI_2 + 1e-15));
    }

    #[test]
    fn constant_rows_fail() {
        let rows = vec![vec![1.0, 1.0]; 4];
        assert!(matches!(pca1_project(&rows), Err(Error::Numeric(_))));
    }
}
