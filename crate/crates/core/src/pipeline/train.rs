use std::collections::BTreeMap;

use super::config::{DistortionKind, SsmpChoice, TrainConfig};
use super::data::{argmax, prepare, LabeledSet};
use super::eval::evaluate_set;
use super::metrics::{EpochMetrics, MetricsLog};
use super::optim::{lookahead, lr_schedule, nesterov_step};
use crate::distort::{draw_distortion, draw_rotation, DistortionDegree, DistortionSample, DropSchedule};
use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};
use crate::tensornet::{Checkpoint, Mode, Network, Noise, NoiseKey, SsmpStrategy};

const NOTE_LOSSES: &str = "loss_history";
const NOTE_METRICS: &str = "metrics";
const CONFIG_PREFIX: &str = "config.";

/// Distortion drawn for training sample `index` in `epoch`.
pub fn training_distortion(cfg: &TrainConfig, theta: DistortionDegree, epoch: usize, index: usize) -> DistortionSample {
    let mut rng = Stream::new(cfg.seed, Domain::Distortion, &[epoch as u64, index as u64]);
    match cfg.distortion {
        DistortionKind::Affine => draw_distortion(theta, cfg.grid, &mut rng),
        DistortionKind::Rotation => draw_rotation(theta, &mut rng),
    }
}

/// First epoch, up to `epoch`, that runs in the final schedule stage.
fn final_stage_entry(sched: &DropSchedule, epoch: usize, losses: &[f64]) -> Option<usize> {
    let last = sched.stages().len() - 1;
    (0..=epoch).find(|&e| sched.stage_at(e, losses) == last)
}

fn strategy_at(cfg: &TrainConfig, sched: &DropSchedule, epoch: usize, losses: &[f64]) -> SsmpStrategy {
    match cfg.ssmp {
        SsmpChoice::Fixed(s) => s,
        SsmpChoice::Auto => {
            SsmpStrategy::Ssmp3 { switch_epoch: final_stage_entry(sched, epoch, losses).unwrap_or(cfg.epochs) }
        }
    }
}

/// Recovers the training configuration stored in a checkpoint.
pub fn config_from_checkpoint(ck: &Checkpoint) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (k, v) in &ck.notes {
        if let Some(key) = k.strip_prefix(CONFIG_PREFIX) {
            cfg.set(key, v).map_err(|e| Error::checkpoint(format!("note.{k}"), e.to_string()))?;
        }
    }
    Ok(cfg)
}

/// Metrics recorded in a checkpoint.
pub fn metrics_from_checkpoint(ck: &Checkpoint) -> Result<MetricsLog> {
    ck.notes.get(NOTE_METRICS).map_or(Ok(MetricsLog::default()), |m| MetricsLog::from_json(m))
}

fn loss_history(ck: &Checkpoint) -> Result<Vec<f64>> {
    match ck.notes.get(NOTE_LOSSES) {
        Some(text) => serde_json::from_str(text).map_err(|e| Error::checkpoint("note.loss_history", e.to_string())),
        None => Ok(Vec::new()),
    }
}

fn write_notes(ck: &mut Checkpoint, cfg: &TrainConfig, losses: &[f64], metrics: &MetricsLog) {
    let mut notes = BTreeMap::new();
    for (k, v) in cfg.entries() {
        notes.insert(format!("{CONFIG_PREFIX}{k}"), v);
    }
    notes.insert(NOTE_LOSSES.into(), serde_json::to_string(losses).expect("finite losses"));
    notes.insert(NOTE_METRICS.into(), metrics.to_json());
    ck.notes = notes;
}

/// Trains a network with Nesterov momentum under the distortion schedule.
///
/// Every epoch draws a fresh distortion for each training character,
/// shuffles the set and walks it in minibatches. After each epoch the
/// checkpoint is handed to `on_epoch`. With `resume`, training continues
/// from the checkpoint's epoch and reproduces the uninterrupted run.
pub fn train(
    cfg: &TrainConfig,
    train_set: &LabeledSet,
    val_set: Option<&LabeledSet>,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Checkpoint, MetricsLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let categories = train_set.categories.clone();
    let spec = cfg.network_spec(categories.len())?;
    let sched = cfg.drop_schedule()?;
    let params = cfg.feature_params();

    let (mut ck, mut losses, mut metrics) = match resume {
        Some(ck) => {
            if ck.spec().notation() != spec.notation() || ck.spec().input_channels != spec.input_channels {
                return Err(Error::checkpoint("spec", "checkpoint network differs from the configuration"));
            }
            if ck.categories != categories {
                return Err(Error::checkpoint("categories", "checkpoint categories differ from the training set"));
            }
            if ck.seed != cfg.seed {
                return Err(Error::checkpoint("seed", "checkpoint seed differs from the configuration"));
            }
            let losses = loss_history(&ck)?;
            let metrics = metrics_from_checkpoint(&ck)?;
            if losses.len() != ck.epoch || metrics.epochs.len() != ck.epoch {
                return Err(Error::checkpoint("note.loss_history", "history does not match the epoch counter"));
            }
            (ck, losses, metrics)
        }
        None => {
            (Checkpoint::new(Network::new(spec, cfg.seed)?, categories, cfg.seed)?, Vec::new(), MetricsLog::default())
        }
    };

    let mut ahead = ck.network.clone();
    let mut grads = ck.network.zero_grads();
    let mut order: Vec<usize> = Vec::with_capacity(train_set.len());
    for epoch in ck.epoch..cfg.epochs {
        let stage = sched.stage_at(epoch, &losses);
        let theta = sched.stages()[stage].0;
        let strategy = strategy_at(cfg, &sched, epoch, &losses);
        ck.network.set_ssmp_strategy(strategy);
        ahead.set_ssmp_strategy(strategy);
        let lr = lr_schedule(epoch, cfg.epochs, cfg.lr_initial, cfg.lr_final);

        order.clear();
        order.extend(0..train_set.len());
        Stream::new(cfg.seed, Domain::Shuffle, &[epoch as u64]).shuffle(&mut order);

        let (mut loss_sum, mut wrong) = (0.0f64, 0usize);
        for (step, batch) in order.chunks(cfg.batch).enumerate() {
            lookahead(ck.network.params(), &ck.velocities, cfg.momentum, ahead.params_mut());
            grads.iter_mut().for_each(|g| g.fill_zero());
            for &index in batch {
                let (input, label) = &train_set.items[index];
                let distortion = training_distortion(cfg, theta, epoch, index);
                let x = prepare(input, &params, Some(&distortion))?;
                let key = NoiseKey {
                    seed: cfg.seed,
                    epoch: epoch as u64,
                    step: step as u64,
                    sample: index as u64,
                    replica: 0,
                };
                let (loss, probs) = ahead.loss_and_grad(&x, *label, Mode::Train, Noise::Keyed(key), &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step });
                }
                loss_sum += f64::from(loss);
                wrong += usize::from(argmax(&probs) != *label);
            }
            let scale = 1.0 / batch.len() as f32;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            nesterov_step(ck.network.params_mut(), &mut ck.velocities, &grads, lr, cfg.momentum);
            if ck.network.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
        }

        let loss = loss_sum / train_set.len() as f64;
        losses.push(loss);
        ck.epoch = epoch + 1;
        ck.schedule_stage = stage;
        let val_err = match val_set {
            Some(v) => {
                let eval = evaluate_set(&ck, &params, v, &[1], cfg.seed, None)?;
                Some(eval.errors[0].rate())
            }
            None => None,
        };
        metrics.epochs.push(EpochMetrics {
            epoch,
            loss,
            train_err: wrong as f64 / train_set.len() as f64,
            theta: theta.value(),
            lr,
            val_err,
        });
        log::info!(
            "epoch {epoch}: loss {loss:.4} train_err {:.4} theta {} lr {lr:.3e}",
            wrong as f64 / train_set.len() as f64,
            theta.value()
        );
        write_notes(&mut ck, cfg, &losses, &metrics);
        on_epoch(&ck)?;
    }
    Ok((ck, metrics))
}
