//! Training configuration as plain-text `key = value` pairs.

use std::fmt::Write as _;

use crate::distort::{DistortionDegree, DropSchedule, PlateauRule, ScheduleMode};
use crate::error::{Error, Result};
use crate::ink;
use crate::sigfeat::{FeatureMode, FeatureParams, WindowSpec};
use crate::tensornet::{resolve_preset, NetworkSpec, SsmpStrategy};

/// Which threshold strategy stochastic pooling uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsmpChoice {
    /// Independent thresholds until the distortion schedule reaches its
    /// final stage, one shared threshold from then on.
    Auto,
    Fixed(SsmpStrategy),
}

/// Kind of random distortion applied to training samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    /// Stretch, both slants, rotation and translation.
    Affine,
    /// Rotation only.
    Rotation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Preset name or compact notation.
    pub network: String,
    pub features: FeatureMode,
    /// Signature truncation depth.
    pub m: usize,
    pub window: usize,
    pub grid: usize,
    pub box_size: f64,
    /// Distortion degrees, optionally with an epoch count each.
    pub schedule: Vec<(f64, Option<usize>)>,
    pub schedule_mode: ScheduleMode,
    pub distortion: DistortionKind,
    pub ssmp: SsmpChoice,
    pub epochs: usize,
    pub batch: usize,
    pub momentum: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub seed: u64,
    /// Numbers of averaged test passes to report.
    pub eval_k: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: "ssmp".into(),
            features: FeatureMode::Sig3d,
            m: 4,
            window: WindowSpec::default().half_window,
            grid: ink::DEFAULT_GRID,
            box_size: ink::DEFAULT_BOX,
            schedule: vec![(0.3, None), (0.2, None), (0.1, None)],
            schedule_mode: ScheduleMode::FixedEpochs,
            distortion: DistortionKind::Affine,
            ssmp: SsmpChoice::Auto,
            epochs: 70,
            batch: 96,
            momentum: 0.9,
            lr_initial: 0.003,
            lr_final: 1e-5,
            seed: 0,
            eval_k: (1..=10).collect(),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in the order they are written.
pub const CONFIG_KEYS: &[&str] = &[
    "network",
    "features",
    "m",
    "window",
    "grid",
    "box",
    "schedule",
    "schedule_mode",
    "patience",
    "min_rel_improve",
    "distortion",
    "ssmp",
    "epochs",
    "batch",
    "momentum",
    "lr_initial",
    "lr_final",
    "seed",
    "eval_k",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

/// `1-10`, `1,5,10` or a mix such as `1-3,10`.
fn parse_k_list(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (num("eval_k", a)?, num("eval_k", b)?);
                if a > b {
                    return Err(Error::config(format!("`eval_k`: empty range `{part}`")));
                }
                out.extend(a..=b);
            }
            None => out.push(num("eval_k", part)?),
        }
    }
    Ok(out)
}

fn plateau_rule(mode: ScheduleMode) -> PlateauRule {
    match mode {
        ScheduleMode::LossPlateau(rule) => rule,
        ScheduleMode::FixedEpochs => PlateauRule::default(),
    }
}

impl TrainConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "network" => self.network = value.to_string(),
            "features" => self.features = value.parse()?,
            "m" => self.m = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "grid" => self.grid = num(key, value)?,
            "box" => self.box_size = num(key, value)?,
            "schedule" => {
                self.schedule = value
                    .split(',')
                    .map(|s| match s.trim().split_once(':') {
                        Some((t, n)) => Ok((num(key, t)?, Some(num(key, n)?))),
                        None => Ok((num(key, s.trim())?, None)),
                    })
                    .collect::<Result<_>>()?
            }
            "schedule_mode" => {
                self.schedule_mode = match value {
                    "fixed" => ScheduleMode::FixedEpochs,
                    "plateau" => ScheduleMode::LossPlateau(plateau_rule(self.schedule_mode)),
                    other => return Err(Error::config(format!("`schedule_mode`: `{other}` is not fixed|plateau"))),
                }
            }
            "patience" | "min_rel_improve" => {
                let mut rule = plateau_rule(self.schedule_mode);
                if key == "patience" {
                    rule.patience = num(key, value)?;
                } else {
                    rule.min_rel_improve = num(key, value)?;
                }
                if let ScheduleMode::LossPlateau(r) = &mut self.schedule_mode {
                    *r = rule;
                } else if rule != PlateauRule::default() {
                    return Err(Error::config(format!("`{key}` needs schedule_mode = plateau first")));
                }
            }
            "distortion" => {
                self.distortion = match value {
                    "affine" => DistortionKind::Affine,
                    "rotation" => DistortionKind::Rotation,
                    other => return Err(Error::config(format!("`distortion`: `{other}` is not affine|rotation"))),
                }
            }
            "ssmp" => {
                self.ssmp = match value {
                    "auto" => SsmpChoice::Auto,
                    other => SsmpChoice::Fixed(other.parse()?),
                }
            }
            "epochs" => self.epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "lr_initial" => self.lr_initial = num(key, value)?,
            "lr_final" => self.lr_final = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "eval_k" => self.eval_k = parse_k_list(value)?,
            other => return Err(Error::config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in [`CONFIG_KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let rule = plateau_rule(self.schedule_mode);
        let schedule = self
            .schedule
            .iter()
            .map(|(t, n)| match n {
                Some(n) => format!("{t}:{n}"),
                None => t.to_string(),
            })
            .collect::<Vec<_>>()
            .join(",");
        let values = [
            self.network.clone(),
            self.features.to_string(),
            self.m.to_string(),
            self.window.to_string(),
            self.grid.to_string(),
            self.box_size.to_string(),
            schedule,
            match self.schedule_mode {
                ScheduleMode::FixedEpochs => "fixed".into(),
                ScheduleMode::LossPlateau(_) => "plateau".into(),
            },
            rule.patience.to_string(),
            rule.min_rel_improve.to_string(),
            match self.distortion {
                DistortionKind::Affine => "affine".into(),
                DistortionKind::Rotation => "rotation".into(),
            },
            match self.ssmp {
                SsmpChoice::Auto => "auto".into(),
                SsmpChoice::Fixed(s) => s.to_string(),
            },
            self.epochs.to_string(),
            self.batch.to_string(),
            self.momentum.to_string(),
            self.lr_initial.to_string(),
            self.lr_final.to_string(),
            self.seed.to_string(),
            self.eval_k.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        ];
        CONFIG_KEYS.iter().copied().zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            mode: self.features,
            depth: self.m,
            window: WindowSpec { half_window: self.window },
            grid: self.grid,
            box_size: self.box_size,
        }
    }

    pub fn drop_schedule(&self) -> Result<DropSchedule> {
        if self.schedule.iter().all(|(_, n)| n.is_none()) {
            let thetas: Vec<f64> = self.schedule.iter().map(|s| s.0).collect();
            if thetas.len() > self.epochs {
                return Err(Error::config("more distortion stages than epochs"));
            }
            return DropSchedule::equal_split(&thetas, self.epochs, self.schedule_mode);
        }
        let stages = self
            .schedule
            .iter()
            .map(|&(t, n)| {
                let n = n.ok_or_else(|| Error::config("give an epoch count for every stage or for none"))?;
                Ok((DistortionDegree::new(t)?, n))
            })
            .collect::<Result<Vec<_>>>()?;
        let sched = DropSchedule::new(stages, self.schedule_mode)?;
        if sched.total_epochs() != self.epochs {
            return Err(Error::config(format!(
                "schedule covers {} epochs but epochs = {}",
                sched.total_epochs(),
                self.epochs
            )));
        }
        Ok(sched)
    }

    /// Network spec for `categories` outputs on this configuration's features.
    pub fn network_spec(&self, categories: usize) -> Result<NetworkSpec> {
        let spec =
            NetworkSpec::parse(resolve_preset(&self.network), self.features.channels(self.m), self.grid, categories)?;
        Ok(match self.ssmp {
            SsmpChoice::Fixed(s) => spec.with_strategy(s),
            SsmpChoice::Auto => spec,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.lr_final > 0.0 && self.lr_initial >= self.lr_final) {
            return Err(Error::config("need lr_initial >= lr_final > 0"));
        }
        if self.epochs >= 3 && self.lr_final > self.lr_initial / 2.0 {
            return Err(Error::config("lr_final must not exceed lr_initial / 2, the rate after the first epoch"));
        }
        if self.eval_k.is_empty() || self.eval_k.contains(&0) {
            return Err(Error::config("eval_k needs one or more positive counts"));
        }
        if let SsmpChoice::Fixed(SsmpStrategy::Ssmp3 { switch_epoch }) = self.ssmp {
            if switch_epoch >= self.epochs {
                return Err(Error::config("the ssmp3 switch epoch must come before the last epoch"));
            }
        }
        self.feature_params().validate()?;
        self.drop_schedule()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.set("schedule", "0.4:5,0.1:5").unwrap();
        cfg.set("epochs", "10").unwrap();
        cfg.set("schedule_mode", "plateau").unwrap();
        cfg.set("patience", "2").unwrap();
        cfg.set("ssmp", "ssmp3@7").unwrap();
        cfg.set("eval_k", "1-3,10").unwrap();
        let back = TrainConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.eval_k, vec![1, 2, 3, 10]);
        back.validate().unwrap();
    }

    #[test]
    fn comments_and_errors() {
        let cfg = TrainConfig::from_text("# comment\nepochs = 5 # trailing\n\nfeatures=bitmap\n").unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.features, FeatureMode::Bitmap);
        let err = TrainConfig::from_text("epochs = 5\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
        assert!(TrainConfig::from_text("epochs 5").is_err());
    }

    #[test]
    fn default_schedule_thirds() {
        let sched = TrainConfig::default().drop_schedule().unwrap();
        let epochs: Vec<usize> = sched.stages().iter().map(|s| s.1).collect();
        assert_eq!(epochs, vec![24, 23, 23]);
    }

    #[test]
    fn validation() {
        let bad = |k: &str, v: &str| {
            let mut cfg = TrainConfig::default();
            cfg.set(k, v).unwrap();
            cfg.validate().is_err()
        };
        assert!(bad("epochs", "0"));
        assert!(bad("momentum", "1"));
        assert!(bad("lr_final", "0.01"));
        assert!(bad("schedule", "0.1,0.2"));
        assert!(bad("schedule", "0.3:10,0.1:10"));
        assert!(bad("ssmp", "ssmp3@70"));
        assert!(TrainConfig::default().validate().is_ok());
    }
}
