//! Rotation-confusion experiment: a horizontal and a vertical bar are easy
//! to tell apart under small rotations and indistinguishable once rotations
//! cover the full circle.

use super::config::{DistortionKind, TrainConfig};
use super::data::LabeledSet;
use super::eval::evaluate_set;
use super::train::train;
use crate::distort::{draw_rotation, DistortionDegree};
use crate::error::{Error, Result};
use crate::ink::synth_dataset;
use crate::rng::{Domain, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct RotationDemo {
    /// Training settings; the schedule and distortion kind are replaced per Θ.
    pub config: TrainConfig,
    pub train_per_category: usize,
    pub test_per_category: usize,
    pub jitter: f64,
}

impl Default for RotationDemo {
    fn default() -> Self {
        Self { config: super::toy_config(0), train_per_category: 120, test_per_category: 60, jitter: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationPoint {
    pub theta: f64,
    pub accuracy: f64,
}

/// For each Θ, trains on `hbar`/`vbar` with rotations drawn from `U(-Θ, Θ)`
/// and reports accuracy on a test set rotated the same way. Results keep
/// the order of `thetas`.
pub fn demo_rotation_confusion(thetas: &[f64], seed: u64, demo: &RotationDemo) -> Result<Vec<RotationPoint>> {
    if thetas.is_empty() {
        return Err(Error::config("no rotation degrees given"));
    }
    let data = synth_dataset(2, demo.train_per_category + demo.test_per_category, demo.jitter, seed)?;
    let (train_d, test_d) = data.split_per_category(demo.train_per_category);
    let train_set = LabeledSet::from_dataset(&train_d, &data.categories)?;
    let test_set = LabeledSet::from_dataset(&test_d, &data.categories)?;
    thetas
        .iter()
        .map(|&theta| {
            let degree = DistortionDegree::new(theta)?;
            let mut cfg = demo.config.clone();
            cfg.seed = seed;
            cfg.schedule = vec![(theta, None)];
            cfg.distortion = DistortionKind::Rotation;
            let (ck, _) = train(&cfg, &train_set, None, None, |_| Ok(()))?;
            let rotate = |i: usize| draw_rotation(degree, &mut Stream::new(seed, Domain::Demo, &[i as u64]));
            let report = evaluate_set(&ck, &cfg.feature_params(), &test_set, &[1], seed, Some(&rotate))?;
            Ok(RotationPoint { theta, accuracy: 1.0 - report.errors[0].rate() })
        })
        .collect()
}

/// `theta,accuracy` lines in input order.
pub fn rotation_report(points: &[RotationPoint]) -> String {
    let mut out = String::from("theta,accuracy\n");
    for p in points {
        out.push_str(&format!("{},{:.4}\n", p.theta, p.accuracy));
    }
    out
}
