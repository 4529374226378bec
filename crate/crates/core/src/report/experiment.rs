use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emit::{emit_csv, emit_ppm_overlay, emit_svg_plot, write_atomic, Series};
use super::metrics::{compute_metrics, roc_points, MetricsRow};
use crate::continual::{
    forgetting_stats, summarize, train_run, ContinualRun, ForgettingSummary, TrainConfig,
};
use crate::data::{
    build_task, load_cifar10, load_mnist, synthetic_task, DatasetSpec, LabeledImage, SyntheticSpec,
    TaskDataset,
};
use crate::error::{Error, Result};
use crate::explain::gradcam;
use crate::models::{
    Classifier, HeadKind, HybridSvm, LinearSvm, Network, NetworkConfig, PegasosConfig, Prediction, Qnn,
    QnnConfig,
};
use crate::quantum::QuantumHead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cqural,
    Cnn,
    Svm,
    HybridSvm,
    Qnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Cqural, ModelKind::Cnn, ModelKind::Svm, ModelKind::HybridSvm, ModelKind::Qnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cqural => "cqural",
            ModelKind::Cnn => "cnn",
            ModelKind::Svm => "svm",
            ModelKind::HybridSvm => "hybrid_svm",
            ModelKind::Qnn => "qnn",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, ModelKind::Cqural | ModelKind::Cnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (cqural, cnn, svm, hybrid_svm, qnn)")))
    }
}

/// Whether the injection step runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Plain,
    Continual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub mnist_images: PathBuf,
    pub mnist_labels: PathBuf,
    pub cifar_batches: Vec<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths {
            mnist_images: "data/mnist01/images-idx3-ubyte".into(),
            mnist_labels: "data/mnist01/labels-idx1-ubyte".into(),
            cifar_batches: vec!["data/cifar-10-batches-bin/data_batch_1.bin".into()],
        }
    }
}

/// Geometry and noise of the generated two-blob images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticImages {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub margin: f64,
    pub noise: f64,
}

impl Default for SyntheticImages {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        SyntheticImages {
            channels: s.channels,
            height: s.height,
            width: s.width,
            margin: s.margin,
            noise: s.noise,
        }
    }
}

/// Layer sizes; input shape, head and seed come from the rest of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub fc4: usize,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let n = NetworkConfig::default();
        ArchConfig {
            conv1: n.conv1,
            conv2: n.conv2,
            kernel: n.kernel,
            fc4: n.fc4,
            dropout: n.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub enabled: bool,
    /// Test images to render; `null` renders all of them.
    pub max_images: Option<usize>,
    pub alpha: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            enabled: false,
            max_images: Some(8),
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub paths: DataPaths,
    pub task: DatasetSpec,
    pub synthetic: SyntheticImages,
    pub standardize: bool,
    pub model: ModelKind,
    pub protocol: Protocol,
    pub network: ArchConfig,
    pub head: QuantumHead,
    pub train: TrainConfig,
    pub pegasos: PegasosConfig,
    pub lssvm_gamma: f64,
    pub qnn: QnnConfig,
    pub explain: ExplainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            paths: DataPaths::default(),
            task: DatasetSpec::default(),
            synthetic: SyntheticImages::default(),
            standardize: true,
            model: ModelKind::Cqural,
            protocol: Protocol::Continual,
            network: ArchConfig::default(),
            head: QuantumHead::default(),
            train: TrainConfig::default(),
            pegasos: PegasosConfig::default(),
            lssvm_gamma: 10.0,
            qnn: QnnConfig::default(),
            explain: ExplainConfig::default(),
            seeds: vec![0],
            out: "runs".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.train.validate()?;
        self.task.validate()?;
        if !(self.lssvm_gamma > 0.0) {
            return Err(Error::Config(format!("lssvm_gamma {} must be positive", self.lssvm_gamma)));
        }
        if !(0.0..=1.0).contains(&self.explain.alpha) {
            return Err(Error::Config(format!("explain.alpha {} outside [0, 1]", self.explain.alpha)));
        }
        if self.qnn.epochs == 0 || self.pegasos.epochs == 0 {
            return Err(Error::Config("qnn.epochs and pegasos.epochs must be positive".into()));
        }
        Ok(())
    }

    /// The config as actually run for one seed and model: seeds pushed into
    /// every component and the pool sized for the injection.
    pub fn resolved(&self, model: ModelKind, seed: u64) -> ExperimentConfig {
        let mut c = self.clone();
        c.model = model;
        c.seeds = vec![seed];
        c.task.seed = seed;
        c.train.seed = seed;
        c.pegasos.seed = seed;
        c.task.name = match c.dataset {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        }
        .into();
        c.task.injection_ratio = c.task.injection_ratio.max(c.train.injection_ratio);
        c
    }

    fn network_config(&self, input: [usize; 3]) -> NetworkConfig {
        NetworkConfig {
            input,
            conv1: self.network.conv1,
            conv2: self.network.conv2,
            kernel: self.network.kernel,
            fc4: self.network.fc4,
            dropout: self.network.dropout,
            head: match self.model {
                ModelKind::Cqural => HeadKind::Hybrid(self.head),
                _ => HeadKind::Softmax,
            },
            seed: self.train.seed,
        }
    }
}

/// Builds the two-class task for a resolved config.
pub fn load_task(cfg: &ExperimentConfig) -> Result<TaskDataset> {
    let mut task = match cfg.dataset {
        DatasetKind::Synthetic => {
            let s = &cfg.synthetic;
            synthetic_task(&SyntheticSpec {
                channels: s.channels,
                height: s.height,
                width: s.width,
                margin: s.margin,
                noise: s.noise,
                dataset: cfg.task.clone(),
            })?
        }
        DatasetKind::Mnist | DatasetKind::Cifar10 => {
            let full = if cfg.dataset == DatasetKind::Mnist {
                load_mnist(&cfg.paths.mnist_images, &cfg.paths.mnist_labels)?
            } else {
                load_cifar10(&cfg.paths.cifar_batches)?
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.task.seed);
            build_task(&full, &cfg.task, &mut rng)?
        }
    };
    if cfg.standardize {
        task.standardize()?;
    }
    Ok(task)
}

/// Headline numbers of one (model, seed) run, also written as summary.json.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub seed: u64,
    pub dir: PathBuf,
    pub final_epoch: usize,
    pub test: MetricsRow,
    pub auc: Option<f64>,
    pub spike: Option<f64>,
    pub injected: usize,
    pub forgetting: Option<ForgettingSummary>,
}

pub fn pct(v: f64) -> String {
    format!("{:.4}", 100.0 * v)
}

fn metrics_row(epoch: usize, preds: &[Prediction], test: &[LabeledImage]) -> Result<(MetricsRow, Option<f64>, Vec<String>)> {
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let truths: Vec<usize> = test.iter().map(|im| im.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let m = compute_metrics(&labels, &truths)?;
    let auc = roc_points(&scores, &truths).ok().map(|r| r.auc);
    let c = m.confusion;
    let row = vec![
        epoch.to_string(),
        m.total.to_string(),
        pct(m.accuracy),
        pct(m.precision[0]),
        pct(m.recall[0]),
        pct(m.precision[1]),
        pct(m.recall[1]),
        c[0][0].to_string(),
        c[0][1].to_string(),
        c[1][0].to_string(),
        c[1][1].to_string(),
        auc.map_or(String::new(), |a| format!("{a:.6}")),
    ];
    Ok((m, auc, row))
}

const METRICS_HEADER: [&str; 12] = [
    "epoch", "n", "accuracy_pct", "precision_0_pct", "recall_0_pct", "precision_1_pct", "recall_1_pct",
    "truth0_pred0", "truth0_pred1", "truth1_pred0", "truth1_pred1", "auc",
];
const PRED_HEADER: [&str; 6] = ["epoch", "example", "source_index", "truth", "predicted", "score"];
const LOSS_HEADER: [&str; 5] = ["epoch", "loss", "train_accuracy_pct", "test_accuracy_pct", "train_size"];
const TIMELINE_HEADER: [&str; 6] = ["example", "source_index", "label", "epoch", "predicted", "correct"];
const FORGET_HEADER: [&str; 8] = [
    "example", "source_index", "label", "events", "unforgettable", "first_learned_epoch", "final_margin",
    "dispersion",
];

struct Tables {
    metrics: Vec<Vec<String>>,
    predictions: Vec<Vec<String>>,
    loss: Vec<Vec<String>>,
    timeline: Vec<Vec<String>>,
    forgetting: Vec<Vec<String>>,
    last: Option<(MetricsRow, Option<f64>)>,
}

impl Tables {
    fn new() -> Self {
        Tables {
            metrics: Vec::new(),
            predictions: Vec::new(),
            loss: Vec::new(),
            timeline: Vec::new(),
            forgetting: Vec::new(),
            last: None,
        }
    }

    fn checkpoint(&mut self, epoch: usize, preds: &[Prediction], test: &[LabeledImage]) -> Result<()> {
        let (m, auc, row) = metrics_row(epoch, preds, test)?;
        self.metrics.push(row);
        for (i, (p, im)) in preds.iter().zip(test).enumerate() {
            self.predictions.push(vec![
                epoch.to_string(),
                i.to_string(),
                im.source_index.to_string(),
                im.label.to_string(),
                p.label.to_string(),
                p.score.to_string(),
            ]);
        }
        self.last = Some((m, auc));
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("metrics.csv"), &emit_csv(&METRICS_HEADER, &self.metrics)?)?;
        write_atomic(&dir.join("predictions.csv"), &emit_csv(&PRED_HEADER, &self.predictions)?)?;
        write_atomic(&dir.join("loss_curve.csv"), &emit_csv(&LOSS_HEADER, &self.loss)?)?;
        write_atomic(&dir.join("timeline.csv"), &emit_csv(&TIMELINE_HEADER, &self.timeline)?)?;
        write_atomic(&dir.join("forgetting.csv"), &emit_csv(&FORGET_HEADER, &self.forgetting)?)?;
        let points: Vec<(f64, f64)> = self
            .loss
            .iter()
            .filter_map(|r| Some((r[0].parse().ok()?, r[1].parse().ok()?)))
            .collect();
        if !points.is_empty() {
            let svg = emit_svg_plot(&[Series::new("training loss", points)], 640, 400, "Training loss")?;
            write_atomic(&dir.join("loss_curve.svg"), &svg)?;
        }
        Ok(())
    }
}

fn network_tables(cfg: &ExperimentConfig, task: &TaskDataset, run: &ContinualRun) -> Result<Tables> {
    let mut t = Tables::new();
    let mut epochs = cfg.train.checkpoint_epochs();
    if epochs.last() != Some(&cfg.train.epochs) {
        epochs.push(cfg.train.epochs);
    }
    for &e in &epochs {
        t.checkpoint(e, &run.records[e - 1].test, &task.test)?;
    }
    for r in &run.records {
        t.loss.push(vec![
            r.epoch.to_string(),
            format!("{:.10}", r.loss),
            pct(r.train_accuracy),
            pct(r.test_accuracy),
            r.train_size.to_string(),
        ]);
    }
    let tl = &run.timeline;
    for (i, im) in task.train.iter().enumerate() {
        for (k, &e) in tl.epochs.iter().enumerate() {
            t.timeline.push(vec![
                i.to_string(),
                im.source_index.to_string(),
                im.label.to_string(),
                e.to_string(),
                tl.predicted[i][k].to_string(),
                u8::from(tl.correct[i][k]).to_string(),
            ]);
        }
    }
    let final_p1: Vec<f64> = run.final_record().tracked.iter().map(|p| p.score).collect();
    let stats = forgetting_stats(tl, &final_p1, &run.tracked_labels);
    for (i, (s, im)) in stats.iter().zip(&task.train).enumerate() {
        t.forgetting.push(vec![
            i.to_string(),
            im.source_index.to_string(),
            im.label.to_string(),
            s.events.to_string(),
            u8::from(s.unforgettable).to_string(),
            s.first_learned_epoch.map_or(String::new(), |e| e.to_string()),
            format!("{:.6}", s.final_margin),
            format!("{:.6}", s.dispersion),
        ]);
    }
    Ok(t)
}

fn write_overlays(cfg: &ExperimentConfig, net: &Network, test: &[LabeledImage], preds: &[Prediction], dir: &Path) -> Result<()> {
    let n = cfg.explain.max_images.map_or(test.len(), |m| m.min(test.len()));
    for (i, (im, p)) in test.iter().zip(preds).take(n).enumerate() {
        let map = gradcam(net, im, p.label)?;
        let ppm = emit_ppm_overlay(im, &map.upsampled, cfg.explain.alpha)?;
        write_atomic(&dir.join(format!("saliency_{i:04}.ppm")), &ppm)?;
    }
    Ok(())
}

/// Trains one model for one seed and writes every output into `dir`.
pub fn run_single(base: &ExperimentConfig, model: ModelKind, seed: u64, dir: &Path) -> Result<RunSummary> {
    let cfg = base.resolved(model, seed);
    cfg.validate()?;
    let task = load_task(&cfg)?;
    let shape = task
        .image_shape()
        .ok_or_else(|| Error::Data("task has no images".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("config_echo.json"), cfg.to_json().as_bytes())?;

    let mut summary = RunSummary {
        model,
        seed,
        dir: dir.to_path_buf(),
        final_epoch: 0,
        test: compute_metrics(&[0], &[0])?,
        auc: None,
        spike: None,
        injected: 0,
        forgetting: None,
    };
    let tables = if model.is_network() {
        let net = Network::new(cfg.network_config(shape))?;
        let (run, trained) = train_run(net, &cfg.train, &task, cfg.protocol == Protocol::Continual)?;
        let t = network_tables(&cfg, &task, &run)?;
        let final_p1: Vec<f64> = run.final_record().tracked.iter().map(|p| p.score).collect();
        summary.forgetting = Some(summarize(&forgetting_stats(&run.timeline, &final_p1, &run.tracked_labels)));
        summary.spike = run.spike;
        summary.injected = run.injected;
        summary.final_epoch = cfg.train.epochs;
        if cfg.explain.enabled {
            write_overlays(&cfg, &trained, &task.test, &run.final_record().test, dir)?;
        }
        t
    } else {
        baseline_tables(&cfg, model, &task, &mut summary)?
    };
    let (m, auc) = tables.last.expect("at least one checkpoint row");
    summary.test = m;
    summary.auc = auc;
    tables.write(dir)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Data(format!("summary: {e}")))? + "\n";
    write_atomic(&dir.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

fn baseline_tables(cfg: &ExperimentConfig, model: ModelKind, task: &TaskDataset, summary: &mut RunSummary) -> Result<Tables> {
    let mut t = Tables::new();
    let (preds, curve) = match model {
        ModelKind::Svm => {
            let (svm, trace) = LinearSvm::fit(&task.train, &cfg.pegasos)?;
            (svm.predict(&task.test)?, trace)
        }
        ModelKind::HybridSvm => (HybridSvm::fit(&task.train, cfg.lssvm_gamma)?.predict(&task.test)?, Vec::new()),
        ModelKind::Qnn => {
            let q = Qnn::fit(&task.train, &cfg.qnn)?;
            let losses = q.losses.clone();
            (q.predict(&task.test)?, losses)
        }
        ModelKind::Cqural | ModelKind::Cnn => unreachable!("network models take the trainer path"),
    };
    let final_epoch = curve.len().max(1);
    for (i, l) in curve.iter().enumerate() {
        t.loss.push(vec![(i + 1).to_string(), format!("{l:.10}"), String::new(), String::new(), task.train.len().to_string()]);
    }
    t.checkpoint(final_epoch, &preds, &task.test)?;
    summary.final_epoch = final_epoch;
    Ok(t)
}

/// Runs the configured model for every seed under `out/seed_<n>`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    cfg.seeds
        .iter()
        .map(|&s| run_single(cfg, cfg.model, s, &cfg.out.join(format!("seed_{s}"))))
        .collect()
}

pub const COMPARE_HEADER: [&str; 10] = [
    "seed", "model", "epoch", "accuracy_pct", "precision_0_pct", "recall_0_pct", "precision_1_pct",
    "recall_1_pct", "auc", "spike",
];

/// All five models on the same task per seed, plus `compare.csv`.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &s in &cfg.seeds {
        for m in ModelKind::ALL {
            out.push(run_single(cfg, m, s, &cfg.out.join(format!("seed_{s}")).join(m.as_str()))?);
        }
    }
    let rows: Vec<Vec<String>> = out
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.model.to_string(),
                r.final_epoch.to_string(),
                pct(r.test.accuracy),
                pct(r.test.precision[0]),
                pct(r.test.recall[0]),
                pct(r.test.precision[1]),
                pct(r.test.recall[1]),
                r.auc.map_or(String::new(), |a| format!("{a:.6}")),
                r.spike.map_or(String::new(), |d| format!("{d:.10}")),
            ]
        })
        .collect();
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_atomic(&cfg.out.join("compare.csv"), &emit_csv(&COMPARE_HEADER, &rows)?)?;
    Ok(out)
}
