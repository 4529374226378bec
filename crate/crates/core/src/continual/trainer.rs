use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forgetting::CorrectnessTimeline;
use crate::autodiff::{Adam, Mode};
use crate::data::{LabeledImage, TaskDataset};
use crate::error::{Error, Result};
use crate::explain::{gradcam, saliency_replay_loss, ReplayBuffer, ReplayConfig, CONFIDENCE_THRESHOLD};
use crate::models::{Network, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub checkpoint_stride: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// 1-based epoch at whose start the injected samples join the train set.
    pub injection_epoch: usize,
    pub injection_ratio: f64,
    pub replay: ReplayConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            checkpoint_stride: 5,
            batch_size: 8,
            lr: 0.001,
            seed: 0,
            injection_epoch: 29,
            injection_ratio: 0.5,
            replay: ReplayConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.injection_epoch == 0 || self.injection_epoch > self.epochs {
            return Err(Error::Config(format!(
                "injection_epoch {} outside 1..={}",
                self.injection_epoch, self.epochs
            )));
        }
        if !(self.injection_ratio >= 0.0 && self.injection_ratio.is_finite()) {
            return Err(Error::Config(format!("injection_ratio {} must be >= 0", self.injection_ratio)));
        }
        if self.batch_size == 0 || self.checkpoint_stride == 0 {
            return Err(Error::Config("batch_size and checkpoint_stride must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.replay.lambda >= 0.0) {
            return Err(Error::Config(format!("replay lambda {} must be >= 0", self.replay.lambda)));
        }
        Ok(())
    }

    /// Epochs that get a row in the checkpoint tables.
    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        (1..=self.epochs).filter(|e| e % self.checkpoint_stride == 0).collect()
    }

    /// Number of pool examples injected, `ceil(ρ·|train|)`.
    pub fn injection_count(&self, train_len: usize) -> usize {
        (self.injection_ratio * train_len as f64).ceil() as usize
    }
}

/// Everything measured after one training epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch's minibatches.
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_size: usize,
    /// Eval-mode predictions on the tracked set (the original train partition).
    pub tracked: Vec<Prediction>,
    pub tracked_correct: Vec<bool>,
    pub test: Vec<Prediction>,
}

/// Network, optimizer and the rng stream that drives shuffling and dropout.
pub struct Trainer {
    pub net: Network,
    pub adam: Adam,
    pub buffer: ReplayBuffer,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
}

fn accuracy(preds: &[Prediction], images: &[LabeledImage]) -> f64 {
    let hits = preds.iter().zip(images).filter(|(p, im)| p.label == im.label).count();
    hits as f64 / images.len().max(1) as f64
}

impl Trainer {
    pub fn new(net: Network, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            net,
            adam: Adam::new(cfg.lr),
            buffer: ReplayBuffer::new(cfg.replay.capacity, cfg.seed ^ 0xB0FF),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn eval(&self, images: &[LabeledImage], epoch: usize, salt: u64) -> Result<Vec<Prediction>> {
        let refs: Vec<&LabeledImage> = images.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ ((epoch as u64) << 32) ^ salt);
        Ok(self
            .net
            .probabilities(&refs, &mut rng)?
            .into_iter()
            .map(|(p0, p1)| Prediction::from_probs(p0, p1))
            .collect())
    }

    /// One shuffled pass over `train`, then eval-mode measurement. The first
    /// `tracked` examples of `train` form the tracked set.
    pub fn train_epoch(
        &mut self,
        epoch: usize,
        train: &[LabeledImage],
        tracked: usize,
        test: &[LabeledImage],
    ) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledImage> = idx.iter().map(|&i| &train[i]).collect();
            let (tape, loss) = if self.cfg.replay.enabled {
                saliency_replay_loss(&self.net, &batch, &self.buffer, &self.cfg.replay, &mut self.rng)?
            } else {
                let (tape, loss, _) = self.net.loss(&batch, Mode::Train, &mut self.rng)?;
                (tape, loss)
            };
            let value = tape.value(loss)[0];
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {value} at epoch {epoch}, batch {b}"
                )));
            }
            total += value * batch.len() as f64;
            tape.backward_into(loss, &mut self.net.params)?;
            self.adam.step(&mut self.net.params)?;
        }

        let train_preds = self.eval(train, epoch, 1)?;
        let test_preds = self.eval(test, epoch, 2)?;
        if self.cfg.replay.enabled {
            for (im, p) in train.iter().zip(&train_preds) {
                let conf = if p.label == 1 { p.score } else { 1.0 - p.score };
                if p.label == im.label && conf > CONFIDENCE_THRESHOLD {
                    let map = gradcam(&self.net, im, im.label)?;
                    self.buffer.admit(im, p.label, conf, &map);
                }
            }
        }
        let tracked_preds = train_preds[..tracked].to_vec();
        Ok(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            train_accuracy: accuracy(&train_preds, train),
            test_accuracy: accuracy(&test_preds, test),
            train_size: train.len(),
            tracked_correct: tracked_preds
                .iter()
                .zip(train)
                .map(|(p, im)| p.label == im.label)
                .collect(),
            tracked: tracked_preds,
            test: test_preds,
        })
    }
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinualRun {
    pub records: Vec<EpochRecord>,
    pub timeline: CorrectnessTimeline,
    /// Labels of the tracked set, in timeline order.
    pub tracked_labels: Vec<usize>,
    /// `loss[injection_epoch] − loss[injection_epoch − 1]`; absent when injection happens at epoch 1.
    pub spike: Option<f64>,
    pub injected: usize,
}

impl ContinualRun {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("a run has at least one epoch")
    }
}

/// First `count` pool examples, balanced as `ceil(count/2)` of label 0 and the rest label 1.
fn take_balanced(pool: &[LabeledImage], count: usize) -> Result<Vec<LabeledImage>> {
    let want = [count.div_ceil(2), count / 2];
    let mut got = [0usize; 2];
    let mut out = Vec::with_capacity(count);
    for im in pool {
        if im.label <= 1 && got[im.label] < want[im.label] {
            got[im.label] += 1;
            out.push(im.clone());
        }
    }
    if got != want {
        return Err(Error::Data(format!(
            "injection pool exhausted: need {}+{} examples of labels 0/1, have {}+{}",
            want[0], want[1], got[0], got[1]
        )));
    }
    Ok(out)
}

/// Runs the loop and also returns the trained network. `inject` selects
/// the injection protocol.
pub fn train_run(net: Network, cfg: &TrainConfig, task: &TaskDataset, inject: bool) -> Result<(ContinualRun, Network)> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let mut train = task.train.clone();
    let tracked = train.len();
    let tracked_labels: Vec<usize> = train.iter().map(|im| im.label).collect();
    let mut timeline = CorrectnessTimeline::new(tracked);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut injected = 0;
    for epoch in 1..=cfg.epochs {
        if inject && epoch == cfg.injection_epoch && cfg.injection_ratio > 0.0 {
            let extra = take_balanced(&task.injection_pool, cfg.injection_count(tracked))?;
            injected = extra.len();
            train.extend(extra);
        }
        let rec = trainer.train_epoch(epoch, &train, tracked, &task.test)?;
        let labels: Vec<usize> = rec.tracked.iter().map(|p| p.label).collect();
        timeline.push(epoch, &labels, &tracked_labels);
        records.push(rec);
    }
    let spike = (cfg.injection_epoch >= 2)
        .then(|| records[cfg.injection_epoch - 1].loss - records[cfg.injection_epoch - 2].loss);
    let run = ContinualRun {
        records,
        timeline,
        tracked_labels,
        spike,
        injected,
    };
    Ok((run, trainer.net))
}

/// Trains with the injection protocol: at `injection_epoch` the train set
/// grows by `ceil(ρ·|train|)` balanced pool examples.
pub fn run_continual(net: Network, cfg: &TrainConfig, task: &TaskDataset) -> Result<ContinualRun> {
    train_run(net, cfg, task, true).map(|(r, _)| r)
}

/// Same loop without injection.
pub fn run_plain(net: Network, cfg: &TrainConfig, task: &TaskDataset) -> Result<ContinualRun> {
    train_run(net, cfg, task, false).map(|(r, _)| r)
}
