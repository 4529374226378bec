//! Shared fixtures for the criterion benches.

use cqlab_core::continual::CorrectnessTimeline;
use cqlab_core::data::LabeledImage;
use cqlab_core::models::{Network, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform noise images with alternating labels.
pub fn noise_images(n: usize, shape: [usize; 3], seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let px = (0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
            LabeledImage::new(px, shape, i % 2, i).expect("shape matches pixel count")
        })
        .collect()
}

/// Default-sized hybrid network on 28x28 input.
pub fn default_network() -> Network {
    Network::new(NetworkConfig::default()).expect("default config is valid")
}

/// Random predictions for `examples` items over `epochs` checkpoints.
pub fn random_timeline(examples: usize, epochs: usize, seed: u64) -> CorrectnessTimeline {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..examples).map(|i| i % 2).collect();
    let mut tl = CorrectnessTimeline::new(examples);
    for e in 1..=epochs {
        let pred: Vec<usize> = (0..examples).map(|_| rng.random_range(0..2)).collect();
        tl.push(e, &pred, &labels);
    }
    tl
}
