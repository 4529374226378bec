//! Training loops, sample injection and forgetting diagnostics.

mod forgetting;
mod trainer;

pub use forgetting::{
    count_forgetting_events, forgetting_events, forgetting_stats, label_dispersion,
    misclassification_margin, summarize, CorrectnessTimeline, ForgettingCount, ForgettingStats,
    ForgettingSummary,
};
pub use trainer::{
    run_continual, run_plain, train_run, ContinualRun, EpochRecord, TrainConfig, Trainer,
};
