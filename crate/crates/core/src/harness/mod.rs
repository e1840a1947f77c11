//! Experiment orchestration: configuration, simulated corpora, metrics,
//! scenario runners and reports.

pub mod config;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{run_all, Lab, Mode};
pub use metrics::{accuracy, auc, micro_average_roc, posterior_accuracy, roc, RocCurve};
pub use report::{MetricRow, Report, Timing};
