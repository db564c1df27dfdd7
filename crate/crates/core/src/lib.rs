//! Online handwriting recognition toolkit.
//!
//! The crate is organised around the stages of a recognition pipeline:
//!
//! - [`ink`]: stroke data model, canonical text format, normalisation and a
//!   synthetic dataset generator.
//! - [`distort`]: affine character distortion and the stepwise distortion
//!   curriculum that lowers the distortion degree during training.
//! - [`sigfeat`]: truncated path signatures and rasterisation of characters
//!   into multi-channel feature maps.
//! - [`tensornet`]: a small CPU convolutional network with fractional
//!   stochastic max-pooling, checkpoints and gradient checking.
//! - [`pipeline`]: training with Nesterov momentum, k-run averaged
//!   evaluation and the rotation-confusion experiment.
//!
//! All randomness flows through [`rng::Stream`], a counter-based generator
//! keyed by a seed and a tuple of indices, so results never depend on call
//! order or thread scheduling.

pub mod distort;
pub mod error;
pub mod ink;
pub mod pipeline;
pub mod rng;
pub mod sigfeat;
pub mod tensornet;

pub use distort::{DistortionDegree, DistortionSample, DropSchedule, PlateauRule, ScheduleMode};
pub use error::{Error, Result};
pub use ink::{Character, Dataset, Point, Stroke, TimedPath};
pub use pipeline::{MetricsLog, TrainConfig};
pub use rng::Stream;
pub use sigfeat::{FeatureMap, FeatureMode, TruncatedSignature, WindowSpec};
pub use tensornet::{Checkpoint, NetworkSpec, SsmpStrategy, StrideSeries, Tensor};
