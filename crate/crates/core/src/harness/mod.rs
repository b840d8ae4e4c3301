//! Training loop, learning-rate schedules and snapshot evaluation.

mod schedule;
mod snapshot;
mod train;

pub use schedule::{lr_at, Hyperparams, Schedule};
pub use snapshot::{snapshot_steps, SnapshotPlan};
pub use train::{eval_subset, evaluate, read_metrics_csv, train, MetricsLog, TrainReport, Trainer};
