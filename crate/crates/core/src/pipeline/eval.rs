use super::data::{argmax, prepare, LabeledSet};
use super::metrics::TestError;
use super::train::config_from_checkpoint;
use crate::distort::DistortionSample;
use crate::error::{Error, Result};
use crate::sigfeat::FeatureParams;
use crate::tensornet::{Checkpoint, Network, NoiseKey, Tensor};

/// Marks evaluation streams apart from training steps.
const EVAL_STEP: u64 = u64::MAX;

/// Mean of the softmax outputs of `k` stochastic passes, replicas
/// `key.replica .. key.replica + k`.
pub fn average_predict(net: &Network<f32>, x: &Tensor<f32>, k: usize, key: NoiseKey) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    let mut sum = vec![0.0f64; net.spec().categories()];
    for r in 0..k as u64 {
        let probs = net.predict(x, NoiseKey { replica: key.replica + r, ..key })?;
        for (s, p) in sum.iter_mut().zip(probs) {
            *s += f64::from(p);
        }
    }
    Ok(sum.into_iter().map(|s| s / k as f64).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// One entry per requested `k`, in request order.
    pub errors: Vec<TestError>,
    /// `confusion[true][predicted]` for the largest `k`.
    pub confusion: Vec<Vec<usize>>,
}

/// Key of the evaluation passes for test item `index`.
pub fn eval_key(ck: &Checkpoint, seed: u64, index: usize) -> NoiseKey {
    NoiseKey { seed, epoch: ck.epoch as u64, step: EVAL_STEP, sample: index as u64, replica: 0 }
}

/// Test error for every `k` in `k_list`. Item `i` uses replicas `0..k` of
/// its own stream, so the result for each `k` equals [`average_predict`]
/// with that `k`. `distortion` optionally distorts test item `i`.
pub fn evaluate_set(
    ck: &Checkpoint,
    params: &FeatureParams,
    test: &LabeledSet,
    k_list: &[usize],
    seed: u64,
    distortion: Option<&dyn Fn(usize) -> DistortionSample>,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::config("k list needs one or more positive counts"));
    }
    let n_cat = ck.categories.len();
    let k_max = *k_list.iter().max().expect("non-empty");
    let mut wrong = vec![0usize; k_list.len()];
    let mut confusion = vec![vec![0usize; n_cat]; n_cat];
    for (index, (input, label)) in test.items.iter().enumerate() {
        if *label >= n_cat {
            return Err(Error::InvalidInput(format!(
                "test item {index}: label {label} outside the network's categories"
            )));
        }
        let d = distortion.map(|f| f(index));
        let x = prepare(input, params, d.as_ref())?;
        let key = eval_key(ck, seed, index);
        let mut sum = vec![0.0f64; n_cat];
        let mut at_k = vec![0usize; k_max + 1];
        for r in 0..k_max {
            let probs = ck.network.predict(&x, NoiseKey { replica: r as u64, ..key })?;
            for (s, p) in sum.iter_mut().zip(probs) {
                *s += f64::from(p);
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / (r + 1) as f64).collect();
            at_k[r + 1] = argmax(&mean);
        }
        for (w, &k) in wrong.iter_mut().zip(k_list) {
            *w += usize::from(at_k[k] != *label);
        }
        confusion[*label][at_k[k_max]] += 1;
    }
    let total = test.len();
    let errors = k_list.iter().zip(wrong).map(|(&k, errors)| TestError { k, errors, total }).collect();
    Ok(EvalReport { errors, confusion })
}

/// Evaluates on undistorted test data with the feature settings and seed
/// stored in the checkpoint.
pub fn evaluate(ck: &Checkpoint, test: &LabeledSet, k_list: &[usize]) -> Result<EvalReport> {
    let cfg = config_from_checkpoint(ck)?;
    evaluate_set(ck, &cfg.feature_params(), test, k_list, ck.seed, None)
}
