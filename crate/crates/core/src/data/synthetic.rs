use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::task::{build_task, DatasetSpec, TaskDataset};
use super::LabeledImage;
use crate::error::{Error, Result};

const BACKGROUND: f64 = 30.0;
const PEAK: f64 = 180.0;
const MAX_REJECTIONS: usize = 10_000;

/// Two-blob image task that is linearly separable by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Minimum gap, in pixel units, between the classes along the separating direction.
    pub margin: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub dataset: DatasetSpec,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            channels: 1,
            height: 16,
            width: 16,
            margin: 1.0,
            noise: 120.0,
            dataset: DatasetSpec {
                name: "synthetic".into(),
                ..DatasetSpec::default()
            },
        }
    }
}

fn blob(h: usize, w: usize, cy: f64, cx: f64, amp: f64) -> Vec<f64> {
    let s2 = 2.0 * (h.min(w) as f64 / 8.0).powi(2);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
            out.push(amp * (-d2 / s2).exp());
        }
    }
    out
}

fn centers(h: usize, w: usize) -> [(f64, f64); 2] {
    let (h, w) = (h as f64 - 1.0, w as f64 - 1.0);
    [(h / 3.0, w / 3.0), (2.0 * h / 3.0, 2.0 * w / 3.0)]
}

/// Separating direction and midpoint of the two class templates.
fn separator(c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let [a, b] = centers(h, w).map(|(y, x)| blob(h, w, y, x, PEAK));
    let dir: Vec<f64> = b.iter().zip(&a).map(|(p, q)| p - q).collect::<Vec<_>>().repeat(c);
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let mid = a
        .iter()
        .zip(&b)
        .map(|(p, q)| BACKGROUND + (p + q) / 2.0)
        .collect::<Vec<_>>()
        .repeat(c);
    (dir.into_iter().map(|d| d / norm).collect(), mid)
}

/// Draws `per_class` images of each class with integer pixels in [0, 255].
pub fn synthetic_images(
    shape: [usize; 3],
    margin: f64,
    noise: f64,
    per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<LabeledImage>> {
    let [c, h, w] = shape;
    if !(margin > 0.0) {
        return Err(Error::Config(format!("synthetic margin must be positive, got {margin}")));
    }
    if h < 4 || w < 4 || c == 0 {
        return Err(Error::Config(format!("synthetic images need at least 1x4x4, got {c}x{h}x{w}")));
    }
    let normal = Normal::new(0.0, noise)
        .map_err(|e| Error::Config(format!("synthetic noise {noise}: {e}")))?;
    let (dir, mid) = separator(c, h, w);
    let ctr = centers(h, w);
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for (label, &(cy, cx)) in ctr.iter().enumerate() {
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let mut tries = 0;
            let pixels = loop {
                let amp = PEAK * rng.random_range(0.5..1.0);
                let b = blob(h, w, cy + rng.random_range(-1.0..1.0), cx + rng.random_range(-1.0..1.0), amp);
                let px: Vec<f64> = (0..c)
                    .flat_map(|_| b.iter())
                    .map(|v| (BACKGROUND + v + normal.sample(rng)).round().clamp(0.0, 255.0))
                    .collect();
                let score: f64 = px.iter().zip(&mid).zip(&dir).map(|((x, m), d)| (x - m) * d).sum();
                if sign * score >= margin / 2.0 {
                    break px;
                }
                tries += 1;
                if tries > MAX_REJECTIONS {
                    return Err(Error::Config(format!(
                        "noise {noise} too large to reach margin {margin}"
                    )));
                }
            };
            out.push(LabeledImage::new(pixels, shape, label, 2 * i + label)?);
        }
    }
    Ok(out)
}

/// Generates enough images for the requested split and pool, then builds the task.
pub fn synthetic_task(spec: &SyntheticSpec) -> Result<TaskDataset> {
    let ds = &spec.dataset;
    ds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ds.seed);
    let per_class = ds.samples_per_class + ds.pool_size().div_ceil(2);
    let full = synthetic_images(
        [spec.channels, spec.height, spec.width],
        spec.margin,
        spec.noise,
        per_class,
        &mut rng,
    )?;
    build_task(&full, ds, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let spec = SyntheticSpec::default();
        let a = synthetic_task(&spec).unwrap();
        assert_eq!(a, synthetic_task(&spec).unwrap());
        assert_eq!(a.image_shape(), Some([1, 16, 16]));
        assert!(a.train.iter().all(|im| im.pixels.iter().all(|p| p.fract() == 0.0)));
    }

    #[test]
    fn margin_must_be_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(synthetic_images([1, 8, 8], 0.0, 1.0, 1, &mut rng).is_err());
    }
}
