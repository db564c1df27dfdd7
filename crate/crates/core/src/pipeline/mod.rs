//! Training, evaluation and experiments.

mod config;
mod data;
mod demo;
mod eval;
mod metrics;
mod optim;
mod train;

pub use config::{DistortionKind, SsmpChoice, TrainConfig, CONFIG_KEYS};
pub use data::{argmax, prepare, Input, LabeledSet};
pub use demo::{demo_rotation_confusion, rotation_report, RotationDemo, RotationPoint};
pub use eval::{average_predict, eval_key, evaluate, evaluate_set, EvalReport};
pub use metrics::{EpochMetrics, MetricsLog, TestError};
pub use optim::{lookahead, lr_schedule, nesterov_step};
pub use train::{config_from_checkpoint, metrics_from_checkpoint, train, training_distortion};

use crate::sigfeat::FeatureMode;
use crate::tensornet::SsmpStrategy;

/// Desk-scale settings: 16×16 feature maps, the small SSMP network and
/// 20 epochs under a 0.3 → 0.2 → 0.1 schedule.
pub fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        network: "small".into(),
        features: FeatureMode::Sig2d,
        grid: 16,
        box_size: 12.0,
        epochs: 20,
        batch: 32,
        lr_initial: 0.01,
        lr_final: 1e-3,
        ssmp: SsmpChoice::Fixed(SsmpStrategy::Ssmp3 { switch_epoch: 14 }),
        seed,
        ..TrainConfig::default()
    }
}
