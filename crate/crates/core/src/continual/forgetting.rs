use serde::Serialize;

/// Per-example prediction history, one entry per checkpoint epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectnessTimeline {
    pub epochs: Vec<usize>,
    /// `predicted[example][checkpoint]`.
    pub predicted: Vec<Vec<usize>>,
    /// `correct[example][checkpoint]`.
    pub correct: Vec<Vec<bool>>,
}

impl CorrectnessTimeline {
    pub fn new(examples: usize) -> Self {
        CorrectnessTimeline {
            epochs: Vec::new(),
            predicted: vec![Vec::new(); examples],
            correct: vec![Vec::new(); examples],
        }
    }

    pub fn examples(&self) -> usize {
        self.correct.len()
    }

    /// Appends one checkpoint. `epoch` must exceed the previous one.
    pub fn push(&mut self, epoch: usize, predicted: &[usize], labels: &[usize]) {
        debug_assert!(self.epochs.last().is_none_or(|&e| e < epoch));
        debug_assert_eq!(predicted.len(), self.examples());
        self.epochs.push(epoch);
        for (i, (&p, &y)) in predicted.iter().zip(labels).enumerate() {
            self.predicted[i].push(p);
            self.correct[i].push(p == y);
        }
    }
}

/// Forgetting summary for one correctness sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ForgettingCount {
    /// Correct-to-incorrect transitions between consecutive checkpoints.
    pub events: usize,
    /// Learned at some checkpoint and never incorrect afterwards.
    pub unforgettable: bool,
    /// Index of the first correct checkpoint.
    pub first_learned: Option<usize>,
}

pub fn forgetting_events(correct: &[bool]) -> ForgettingCount {
    let events = correct.windows(2).filter(|w| w[0] && !w[1]).count();
    let first_learned = correct.iter().position(|&c| c);
    ForgettingCount {
        events,
        unforgettable: first_learned.is_some() && events == 0,
        first_learned,
    }
}

pub fn count_forgetting_events(timeline: &CorrectnessTimeline) -> Vec<ForgettingCount> {
    timeline.correct.iter().map(|c| forgetting_events(c)).collect()
}

/// `1 − (modal label count)/(checkpoints)`; ties go to the smaller label.
pub fn label_dispersion(predicted: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let max_label = predicted.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    predicted.iter().for_each(|&p| counts[p] += 1);
    let modal = counts.iter().copied().max().unwrap_or(0);
    1.0 - modal as f64 / predicted.len() as f64
}

/// `p(true) − p(other)` for a two-class probability pair.
pub fn misclassification_margin(probs: (f64, f64), label: usize) -> f64 {
    let (p0, p1) = probs;
    if label == 1 {
        p1 - p0
    } else {
        p0 - p1
    }
}

/// Full per-example diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForgettingStats {
    pub events: usize,
    pub unforgettable: bool,
    /// Epoch at which the example was first classified correctly.
    pub first_learned_epoch: Option<usize>,
    pub final_margin: f64,
    pub dispersion: f64,
}

/// Combines the timeline with final class-1 probabilities of the tracked set.
pub fn forgetting_stats(timeline: &CorrectnessTimeline, final_p1: &[f64], labels: &[usize]) -> Vec<ForgettingStats> {
    timeline
        .correct
        .iter()
        .zip(&timeline.predicted)
        .zip(final_p1.iter().zip(labels))
        .map(|((c, p), (&p1, &y))| {
            let f = forgetting_events(c);
            ForgettingStats {
                events: f.events,
                unforgettable: f.unforgettable,
                first_learned_epoch: f.first_learned.map(|i| timeline.epochs[i]),
                final_margin: misclassification_margin((1.0 - p1, p1), y),
                dispersion: label_dispersion(p),
            }
        })
        .collect()
}

/// Aggregate counts for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForgettingSummary {
    pub examples: usize,
    pub total_events: usize,
    pub forgotten_examples: usize,
    pub unforgettable: usize,
    pub never_learned: usize,
    pub mean_dispersion: f64,
}

pub fn summarize(stats: &[ForgettingStats]) -> ForgettingSummary {
    let n = stats.len();
    ForgettingSummary {
        examples: n,
        total_events: stats.iter().map(|s| s.events).sum(),
        forgotten_examples: stats.iter().filter(|s| s.events > 0).count(),
        unforgettable: stats.iter().filter(|s| s.unforgettable).count(),
        never_learned: stats.iter().filter(|s| s.first_learned_epoch.is_none()).count(),
        mean_dispersion: if n == 0 {
            0.0
        } else {
            stats.iter().map(|s| s.dispersion).sum::<f64>() / n as f64
        },
    }
}
