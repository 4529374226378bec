use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, Prediction};
use crate::autodiff::{Mode, ParamId, ParamSet, Tape, Tensor, Var};
use crate::data::{batch_tensor, LabeledImage};
use crate::error::{Error, Result};
use crate::quantum::{EmbeddingMode, QuantumHead};

const EVAL_CHUNK: usize = 32;

/// Final stage of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// fc5 drives a single simulated qubit.
    Hybrid(QuantumHead),
    /// fc5 emits two logits.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Channels, height, width.
    pub input: [usize; 3],
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub fc4: usize,
    pub dropout: f64,
    pub head: HeadKind,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input: [1, 28, 28],
            conv1: 8,
            conv2: 16,
            kernel: 5,
            fc4: 32,
            dropout: 0.25,
            head: HeadKind::Hybrid(QuantumHead::default()),
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Spatial size after conv1 and after conv2.
    pub fn feature_sizes(&self) -> Result<[(usize, usize); 2]> {
        let [c, h, w] = self.input;
        let k = self.kernel;
        if c == 0 || k == 0 || self.conv1 == 0 || self.conv2 == 0 || self.fc4 == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if h < 2 * k - 1 || w < 2 * k - 1 {
            return Err(Error::Config(format!(
                "input {h}x{w} too small for two {k}x{k} convolutions"
            )));
        }
        Ok([(h - k + 1, w - k + 1), (h - 2 * k + 2, w - 2 * k + 2)])
    }

    pub fn fc5_out(&self) -> usize {
        match self.head {
            HeadKind::Hybrid(h) => h.arity(),
            HeadKind::Softmax => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_sizes()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Post-ReLU conv1 activations.
    pub conv1: Var,
    /// `N x 2` log-probabilities.
    pub log_probs: Var,
    /// Post-ReLU conv2 activations, `N x conv2 x H2 x W2`.
    pub features: Var,
}

#[derive(Debug, Clone, Copy)]
struct Ids {
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    fc4: (ParamId, ParamId),
    fc5: (ParamId, ParamId),
    head_w: Option<ParamId>,
}

/// conv1 → ReLU → conv2 → ReLU → dropout → fc4 → ReLU → fc5 → head.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    pub params: ParamSet,
    ids: Ids,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let [c, _, _] = config.input;
        let [_, (h2, w2)] = config.feature_sizes()?;
        let k = config.kernel;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let layer = |params: &mut ParamSet, name: &str, wshape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let out = wshape[0];
            let w = params.insert(format!("{name}.weight"), Tensor::uniform(wshape, bound, rng));
            let b = params.insert(format!("{name}.bias"), Tensor::uniform(vec![out], bound, rng));
            (w, b)
        };
        let conv1 = layer(&mut params, "conv1", vec![config.conv1, c, k, k], c * k * k, &mut rng);
        let conv2 = layer(&mut params, "conv2", vec![config.conv2, config.conv1, k, k], config.conv1 * k * k, &mut rng);
        let flat = config.conv2 * h2 * w2;
        let fc4 = layer(&mut params, "fc4", vec![config.fc4, flat], flat, &mut rng);
        let fc5 = layer(&mut params, "fc5", vec![config.fc5_out(), config.fc4], config.fc4, &mut rng);
        let head_w = match config.head {
            HeadKind::Hybrid(h) if h.mode == EmbeddingMode::Amplitude => {
                Some(params.insert("head.w", Tensor::zeros(vec![1])))
            }
            _ => None,
        };
        Ok(Network {
            config,
            params,
            ids: Ids {
                conv1,
                conv2,
                fc4,
                fc5,
                head_w,
            },
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self.config.head, HeadKind::Hybrid(_))
    }

    /// Scalar count of everything before fc5.
    pub fn trunk_scalars(&self) -> usize {
        let i = self.ids;
        [i.conv1, i.conv2, i.fc4]
            .iter()
            .map(|(w, b)| self.params.get(*w).numel() + self.params.get(*b).numel())
            .sum()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 {
            return Err(Error::dim("input rank", 4, shape.len()));
        }
        for (axis, (want, got)) in ["channel axis", "height axis", "width axis"]
            .iter()
            .zip(self.config.input.iter().zip(&shape[1..]))
        {
            if want != got {
                return Err(Error::dim(*axis, *want, *got));
            }
        }
        Ok(())
    }

    /// Records the network on `tape`. The rng feeds dropout masks and, for a
    /// shot-sampled head, the shot seed; it is untouched in eval mode with an
    /// analytic head.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        batch: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        self.check_input(batch.shape())?;
        let p = |tape: &mut Tape, (w, b): (ParamId, ParamId)| (tape.param(&self.params, w), tape.param(&self.params, b));
        let x = tape.input(batch);
        let (w, b) = p(tape, self.ids.conv1);
        let h = tape.conv2d(x, w, b)?;
        let conv1 = tape.relu(h)?;
        let (w, b) = p(tape, self.ids.conv2);
        let h = tape.conv2d(conv1, w, b)?;
        let features = tape.relu(h)?;
        let h = tape.dropout2d(features, self.config.dropout, mode, rng)?;
        let h = tape.flatten(h)?;
        let (w, b) = p(tape, self.ids.fc4);
        let h = tape.linear(h, w, b)?;
        let h = tape.relu(h)?;
        let (w, b) = p(tape, self.ids.fc5);
        let out = tape.linear(h, w, b)?;
        let log_probs = match self.config.head {
            HeadKind::Softmax => tape.log_softmax(out)?,
            HeadKind::Hybrid(head) => {
                let t = tape.tanh(out)?;
                let angles = tape.scale(t, PI)?;
                let hw = self.ids.head_w.map(|id| tape.param(&self.params, id));
                let seed = if head.shots > 0 { rng.random() } else { 0 };
                head.record(tape, angles, hw, seed)?
            }
        };
        Ok(Forward {
            conv1,
            log_probs,
            features,
        })
    }

    /// Mean NLL of `targets`; returns the tape, the loss and the forward outputs.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        images: &[&LabeledImage],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tape, Var, Forward)> {
        let batch = batch_tensor(images)?;
        let targets: Vec<usize> = images.iter().map(|im| im.label).collect();
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, &batch, mode, rng)?;
        let loss = tape.nll(fwd.log_probs, &targets)?;
        Ok((tape, loss, fwd))
    }

    /// Class probabilities `(P0, P1)` in eval mode.
    pub fn probabilities(&self, images: &[&LabeledImage], shot_rng: &mut impl Rng) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(EVAL_CHUNK) {
            let mut tape = Tape::new();
            let fwd = self.forward(&mut tape, &batch_tensor(chunk)?, Mode::Eval, shot_rng)?;
            out.extend(tape.value(fwd.log_probs).chunks(2).map(|r| (r[0].exp(), r[1].exp())));
        }
        Ok(out)
    }
}

impl Classifier for Network {
    fn name(&self) -> &str {
        if self.is_hybrid() {
            "cqural"
        } else {
            "cnn"
        }
    }

    fn predict(&self, images: &[LabeledImage]) -> Result<Vec<Prediction>> {
        let refs: Vec<&LabeledImage> = images.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5EED);
        Ok(self
            .probabilities(&refs, &mut rng)?
            .into_iter()
            .map(|(p0, p1)| Prediction::from_probs(p0, p1))
            .collect())
    }
}
