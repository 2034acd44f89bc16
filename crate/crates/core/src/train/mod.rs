//! Momentum SGD training, evaluation, metrics files and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod optim;
pub mod run;

pub use config::TrainConfig;
pub use metrics::{metrics_csv, write_metrics_csv, MetricsRow, METRICS_HEADER};
pub use optim::{sgd_momentum_step, Sgd};
pub use run::{argmax, evaluate, train, train_with, Evaluation};
