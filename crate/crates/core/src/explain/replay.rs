use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{channel_weights, features_and_grads, SaliencyMap};
use crate::autodiff::{Mode, Tape, Var};
use crate::data::{batch_tensor, LabeledImage};
use crate::error::{Error, Result};
use crate::models::Network;

pub const CONFIDENCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub enabled: bool,
    /// Weight of the saliency distance term.
    pub lambda: f64,
    /// Buffer capacity per class.
    pub capacity: usize,
    /// Whether replayed inputs also enter the task loss.
    pub include_inputs: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            enabled: false,
            lambda: 1.0,
            capacity: 32,
            include_inputs: true,
        }
    }
}

/// A confidently and correctly classified training example with its map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub image: LabeledImage,
    pub map: SaliencyMap,
    pub confidence: f64,
}

/// Per-class reservoir of replay entries.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    classes: [Vec<ReplayEntry>; 2],
    seen: [usize; 2],
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity,
            classes: [Vec::new(), Vec::new()],
            seen: [0, 0],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.classes.get(class).map_or(0, Vec::len)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.classes.iter().flatten()
    }

    /// Admits a correct prediction above the confidence threshold, replacing
    /// a resident entry by reservoir sampling once the class is full.
    pub fn admit(&mut self, image: &LabeledImage, predicted: usize, confidence: f64, map: &SaliencyMap) -> bool {
        let class = image.label;
        if class > 1 || predicted != class || !(confidence > CONFIDENCE_THRESHOLD) || self.capacity == 0 {
            return false;
        }
        self.seen[class] += 1;
        let entry = ReplayEntry {
            image: image.clone(),
            map: map.clone(),
            confidence,
        };
        let slot = &mut self.classes[class];
        if slot.len() < self.capacity {
            slot.push(entry);
            return true;
        }
        let j = self.rng.random_range(0..self.seen[class]);
        if j < self.capacity {
            slot[j] = entry;
            true
        } else {
            false
        }
    }

    /// `k` distinct entries chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<&ReplayEntry> {
        let all: Vec<&ReplayEntry> = self.entries().collect();
        let k = k.min(all.len());
        rand::seq::index::sample(rng, all.len(), k)
            .into_iter()
            .map(|i| all[i])
            .collect()
    }
}

/// Squared Frobenius distance between two maps.
pub fn replay_term(current: &[f64], stored: &[f64]) -> f64 {
    current.iter().zip(stored).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Task loss over the batch (plus replayed inputs when enabled) and
/// `λ · mean_i ‖map_i − stored_i‖²` over `min(|buffer|, |batch|)` entries.
///
/// The channel weights and the normalizing maximum are held constant, so the
/// distance gradient reaches the network through the conv2 activations.
pub fn saliency_replay_loss<R: Rng + ?Sized>(
    net: &Network,
    batch: &[&LabeledImage],
    buffer: &ReplayBuffer,
    cfg: &ReplayConfig,
    rng: &mut R,
) -> Result<(Tape, Var)> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Config(format!("replay lambda must be >= 0, got {}", cfg.lambda)));
    }
    let sampled = buffer.sample(batch.len(), rng);
    let mut alphas = Vec::with_capacity(sampled.len());
    for e in &sampled {
        let (_, g, [c, h, w]) = features_and_grads(net, &e.image, e.image.label)?;
        alphas.push(channel_weights(&g, c, h * w));
    }

    let mut images: Vec<&LabeledImage> = batch.to_vec();
    if cfg.include_inputs {
        images.extend(sampled.iter().map(|e| &e.image));
    }
    let targets: Vec<usize> = images.iter().map(|im| im.label).collect();
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, &batch_tensor(&images)?, Mode::Train, rng)?;
    let mut loss = tape.nll(fwd.log_probs, &targets)?;
    if cfg.lambda == 0.0 || sampled.is_empty() {
        return Ok((tape, loss));
    }

    let (features, first_row) = if cfg.include_inputs {
        (fwd.features, batch.len())
    } else {
        let replay: Vec<&LabeledImage> = sampled.iter().map(|e| &e.image).collect();
        let f = net.forward(&mut tape, &batch_tensor(&replay)?, Mode::Eval, rng)?;
        (f.features, 0)
    };
    let mut total: Option<Var> = None;
    for (i, (e, alpha)) in sampled.iter().zip(&alphas).enumerate() {
        let cam = tape.channel_sum(features, first_row + i, alpha)?;
        let mut cam = tape.relu(cam)?;
        let max = tape.value(cam).iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            cam = tape.scale(cam, 1.0 / max)?;
        }
        let d = tape.sq_dist(cam, &e.map.values)?;
        total = Some(match total {
            Some(t) => tape.add(t, d)?,
            None => d,
        });
    }
    let term = tape.scale(total.expect("sampled is non-empty"), cfg.lambda / sampled.len() as f64)?;
    loss = tape.add(loss, term)?;
    Ok((tape, loss))
}
