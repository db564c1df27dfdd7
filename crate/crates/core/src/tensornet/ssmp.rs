//! Spatial stochastic max-pooling: 2×2 max pooling whose window starts
//! follow a randomly thresholded stride series, shrinking each spatial
//! extent by a fractional factor `α ∈ (1, 2]`.
//!
//! For an input extent `N_in`:
//!
//! ```text
//! N_out = ⌊N_in / α + 0.5⌋
//! α     ← N_in / N_out
//! a_i   = ⌊i·α + th_i⌋          for i = 0 .. N_out-2
//! a_{N_out-1} = N_in - 2
//! ```
//!
//! with thresholds `th_i ∈ [0, 1)`. Starts are clamped to be non-decreasing
//! and at most `N_in - 2`; repeated starts are allowed and simply pool the
//! same window twice.

use std::fmt;
use std::str::FromStr;

use super::layers::{pool_backward, pool_forward};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// How thresholds are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsmpStrategy {
    /// An independent threshold per position.
    Ssmp1,
    /// One threshold shared by all positions.
    Ssmp2,
    /// `Ssmp1` before `switch_epoch`, `Ssmp2` from then on.
    Ssmp3 { switch_epoch: usize },
}

impl SsmpStrategy {
    /// Whether positions get independent thresholds at `epoch`.
    pub fn independent_at(self, epoch: usize) -> bool {
        match self {
            SsmpStrategy::Ssmp1 => true,
            SsmpStrategy::Ssmp2 => false,
            SsmpStrategy::Ssmp3 { switch_epoch } => epoch < switch_epoch,
        }
    }
}

impl fmt::Display for SsmpStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SsmpStrategy::Ssmp1 => f.write_str("ssmp1"),
            SsmpStrategy::Ssmp2 => f.write_str("ssmp2"),
            SsmpStrategy::Ssmp3 { switch_epoch } => write!(f, "ssmp3@{switch_epoch}"),
        }
    }
}

impl FromStr for SsmpStrategy {
    type Err = Error;

    /// `ssmp1`, `ssmp2`, or `ssmp3@<switch epoch>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssmp1" => Ok(SsmpStrategy::Ssmp1),
            "ssmp2" => Ok(SsmpStrategy::Ssmp2),
            other => other
                .strip_prefix("ssmp3@")
                .and_then(|e| e.parse().ok())
                .map(|switch_epoch| SsmpStrategy::Ssmp3 { switch_epoch })
                .ok_or_else(|| Error::config(format!("unknown SSMP strategy `{other}` (ssmp1|ssmp2|ssmp3@EPOCH)"))),
        }
    }
}

/// Window starts along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct StrideSeries {
    pub alpha_requested: f64,
    pub alpha_effective: f64,
    pub starts: Vec<usize>,
}

impl StrideSeries {
    /// `s_i = a_i - a_{i-1}` with `a_{-1} = 0`.
    pub fn strides(&self) -> Vec<usize> {
        let mut prev = 0;
        self.starts
            .iter()
            .map(|&a| {
                let s = a - prev;
                prev = a;
                s
            })
            .collect()
    }

    pub fn output_len(&self) -> usize {
        self.starts.len()
    }
}

/// `⌊N_in / α + 0.5⌋`.
pub fn ssmp_output_len(n_in: usize, alpha: f64) -> usize {
    (n_in as f64 / alpha + 0.5).floor() as usize
}

fn check_args(n_in: usize, alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::config(format!("SSMP alpha must lie in (1, 2], got {alpha}")));
    }
    if n_in < 3 {
        return Err(Error::shape(format!("SSMP needs an input extent of at least 3, got {n_in}")));
    }
    Ok(())
}

/// Builds the series from explicit thresholds, one per position
/// `0 ..= N_out-2` (extra thresholds are ignored).
pub fn ssmp_plan_with_thresholds(n_in: usize, alpha: f64, thresholds: &[f64]) -> Result<StrideSeries> {
    check_args(n_in, alpha)?;
    let n_out = ssmp_output_len(n_in, alpha);
    if thresholds.len() + 1 < n_out {
        return Err(Error::InvalidInput(format!("{n_out} outputs need {} thresholds", n_out - 1)));
    }
    let effective = n_in as f64 / n_out as f64;
    let last = n_in - 2;
    let mut starts = Vec::with_capacity(n_out);
    let mut prev = 0usize;
    for (i, &th) in thresholds.iter().take(n_out - 1).enumerate() {
        let raw = (i as f64 * effective + th).floor() as usize;
        let a = raw.clamp(prev, last);
        starts.push(a);
        prev = a;
    }
    starts.push(last);
    Ok(StrideSeries { alpha_requested: alpha, alpha_effective: effective, starts })
}

/// Draws a stride series for one axis.
pub fn ssmp_plan(
    n_in: usize,
    alpha: f64,
    strategy: SsmpStrategy,
    epoch: usize,
    rng: &mut Stream,
) -> Result<StrideSeries> {
    check_args(n_in, alpha)?;
    let n = ssmp_output_len(n_in, alpha) - 1;
    let thresholds: Vec<f64> =
        if strategy.independent_at(epoch) { (0..n).map(|_| rng.unit()).collect() } else { vec![rng.unit(); n] };
    ssmp_plan_with_thresholds(n_in, alpha, &thresholds)
}

/// Row and column plans for one pooling layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolPlan {
    pub rows: StrideSeries,
    pub cols: StrideSeries,
}

pub fn ssmp_forward<T: Scalar>(x: &Tensor<T>, plan: &PoolPlan) -> Result<(Tensor<T>, Vec<u32>)> {
    let (_, h, w) = x.dims3()?;
    let fits = |s: &StrideSeries, n: usize| s.starts.last() == Some(&(n - 2));
    if !fits(&plan.rows, h) || !fits(&plan.cols, w) {
        return Err(Error::shape(format!("SSMP plan does not match a {h}x{w} input")));
    }
    pool_forward(x, &plan.rows.starts, &plan.cols.starts)
}

pub fn ssmp_backward<T: Scalar>(gy: &[T], argmax: &[u32], gx: &mut Tensor<T>) {
    pool_backward(gy, argmax, gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;
    use crate::tensornet::layers::mp2_forward;
    use std::collections::BTreeSet;

    #[test]
    fn six_to_four() {
        assert_eq!(ssmp_output_len(6, 1.5), 4);
        let mut seen = BTreeSet::new();
        for k in 0..100 {
            let th = k as f64 / 100.0;
            let plan = ssmp_plan_with_thresholds(6, 1.5, &[th, th, th]).unwrap();
            seen.insert(plan.starts);
        }
        assert_eq!(seen, BTreeSet::from([vec![0, 1, 3, 4], vec![0, 2, 3, 4]]));
    }

    #[test]
    fn fifty_renews_alpha() {
        let plan = ssmp_plan_with_thresholds(50, 1.5, &[0.0; 40]).unwrap();
        assert_eq!(plan.output_len(), 33);
        assert_eq!(plan.alpha_effective, 50.0 / 33.0);
        assert_eq!(*plan.starts.last().unwrap(), 48);
    }

    #[test]
    fn shared_zero_threshold_is_deterministic() {
        let a = ssmp_plan_with_thresholds(20, 1.5, &[0.0; 20]).unwrap();
        let b = ssmp_plan_with_thresholds(20, 1.5, &[0.0; 20]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alpha_out_of_range() {
        let mut rng = Stream::new(0, Domain::Test, &[]);
        assert!(ssmp_plan(10, 1.0, SsmpStrategy::Ssmp1, 0, &mut rng).is_err());
        assert!(ssmp_plan(10, 2.5, SsmpStrategy::Ssmp1, 0, &mut rng).is_err());
        assert!(ssmp_plan(2, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng).is_err());
    }

    #[test]
    fn ssmp3_switches_to_shared() {
        let s = SsmpStrategy::Ssmp3 { switch_epoch: 5 };
        assert!(s.independent_at(4));
        assert!(!s.independent_at(5));
        assert_eq!("ssmp3@5".parse::<SsmpStrategy>().unwrap(), s);
        assert_eq!(s.to_string(), "ssmp3@5");
        assert!("ssmp4".parse::<SsmpStrategy>().is_err());
    }

    #[test]
    fn exact_three_halves_gives_unit_or_double_strides() {
        let mut rng = Stream::new(3, Domain::Test, &[]);
        for n in (6..=128).step_by(3) {
            for strategy in [SsmpStrategy::Ssmp1, SsmpStrategy::Ssmp2] {
                for _ in 0..50 {
                    let p = ssmp_plan(n, 1.5, strategy, 0, &mut rng).unwrap();
                    assert_eq!(p.alpha_effective, 1.5);
                    let s = p.strides();
                    assert!(s[1..].iter().all(|&v| v == 1 || v == 2), "n={n} {:?}", p.starts);
                }
            }
        }
    }

    #[test]
    fn renewed_alpha_can_repeat_a_start() {
        // 4 inputs give 3 outputs and alpha 4/3; a high threshold lands the
        // middle window on the forced last start
        let p = ssmp_plan_with_thresholds(4, 1.5, &[0.0, 0.9]).unwrap();
        assert_eq!(p.starts, vec![0, 2, 2]);
    }

    #[test]
    fn stride_two_plan_equals_mp2() {
        let x = Tensor::<f64>::new(vec![2, 6, 6], (0..72).map(|v| ((v * 37) % 11) as f64).collect()).unwrap();
        let s = |n: usize| StrideSeries {
            alpha_requested: 2.0,
            alpha_effective: 2.0,
            starts: (0..n / 2).map(|i| 2 * i).collect(),
        };
        let (a, ia) = ssmp_forward(&x, &PoolPlan { rows: s(6), cols: s(6) }).unwrap();
        let (b, ib) = mp2_forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(ia, ib);
    }

    #[test]
    fn ramp_picks_bottom_right() {
        let x = Tensor::<f64>::new(vec![1, 6, 6], (0..36).map(f64::from).collect()).unwrap();
        let s = StrideSeries { alpha_requested: 1.5, alpha_effective: 1.5, starts: vec![0, 2, 3, 4] };
        let (y, _) = ssmp_forward(&x, &PoolPlan { rows: s.clone(), cols: s.clone() }).unwrap();
        let mut expected = Vec::new();
        for &r in &s.starts {
            for &c in &s.starts {
                expected.push(((r + 1) * 6 + c + 1) as f64);
            }
        }
        assert_eq!(y.data(), expected.as_slice());
    }

    #[test]
    fn overlapping_windows_accumulate() {
        let x = Tensor::<f64>::new(vec![1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let s = StrideSeries { alpha_requested: 1.5, alpha_effective: 1.5, starts: vec![0, 2, 2] };
        let (_, argmax) = ssmp_forward(&x, &PoolPlan { rows: s.clone(), cols: s }).unwrap();
        let mut gx = Tensor::zeros(&[1, 4, 4]);
        ssmp_backward(&[1.0; 9], &argmax, &mut gx);
        assert_eq!(gx.data()[15], 4.0);
        assert_eq!(gx.data().iter().sum::<f64>(), 9.0);
    }

    #[test]
    fn mismatched_plan_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 6, 6]);
        let s = StrideSeries { alpha_requested: 1.5, alpha_effective: 1.5, starts: vec![0, 2, 3] };
        assert!(ssmp_forward(&x, &PoolPlan { rows: s.clone(), cols: s }).is_err());
    }
}
