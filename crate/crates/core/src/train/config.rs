use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::mining::{LossConfig, LossKind, SamplingStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Nips,
    PostNips,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Self::Nips, Self::PostNips, Self::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nips => "nips",
            Self::PostNips => "post_nips",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub preset: Preset,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub loss: LossConfig,
    pub sampling: SamplingStrategy,
    pub seed: u64,
    /// Random flip and quarter-turn, shared by both patches of a pair.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Nips)
    }
}

pub const CONFIG_KEYS: [&str; 13] = [
    "preset",
    "learning_rate",
    "momentum",
    "weight_decay",
    "epochs",
    "batch_size",
    "dropout_rate",
    "loss",
    "margin",
    "cpr_weight",
    "sampling",
    "seed",
    "augment",
];

impl TrainConfig {
    /// `custom` starts from the nips values.
    pub fn preset(preset: Preset) -> Self {
        let (learning_rate, dropout_rate) = match preset {
            Preset::PostNips => (10.0, 0.3),
            Preset::Nips | Preset::Custom => (0.1, 0.1),
        };
        Self {
            preset,
            learning_rate,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 10,
            batch_size: 512,
            dropout_rate,
            loss: LossConfig::default(),
            sampling: SamplingStrategy::HardestInBatch,
            seed: 0,
            augment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(
                "momentum",
                format!("must be in [0, 1), got {}", self.momentum),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(
                "weight_decay",
                format!("must be >= 0, got {}", self.weight_decay),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::config(
                "batch_size",
                format!("must be at least 2, got {}", self.batch_size),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(
                "dropout_rate",
                format!("must be in [0, 1), got {}", self.dropout_rate),
            ));
        }
        self.loss.validate()
    }

    /// Reads a flat key-value config. `preset` (default nips) supplies every
    /// value not given explicitly.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&CONFIG_KEYS)?;
        let mut c = Self::preset(kv.parsed::<Preset>("preset")?.unwrap_or(Preset::Nips));
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        take!("learning_rate", c.learning_rate);
        take!("momentum", c.momentum);
        take!("weight_decay", c.weight_decay);
        take!("epochs", c.epochs);
        take!("batch_size", c.batch_size);
        take!("dropout_rate", c.dropout_rate);
        take!("margin", c.loss.margin);
        take!("cpr_weight", c.loss.cpr_weight);
        take!("seed", c.seed);
        take!("augment", c.augment);
        if let Some(v) = kv.get("loss") {
            c.loss.kind = v.parse::<LossKind>()?;
        }
        if let Some(v) = kv.get("sampling") {
            c.sampling = v.parse::<SamplingStrategy>()?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("preset", self.preset);
        kv.set("learning_rate", self.learning_rate);
        kv.set("momentum", self.momentum);
        kv.set("weight_decay", self.weight_decay);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("dropout_rate", self.dropout_rate);
        kv.set("loss", self.loss.kind);
        kv.set("margin", self.loss.margin);
        kv.set("cpr_weight", self.loss.cpr_weight);
        kv.set("sampling", self.sampling);
        kv.set("seed", self.seed);
        kv.set("augment", self.augment);
        kv
    }

    /// Optimizer steps for a training set with `points` trainable points.
    pub fn total_steps(&self, points: usize) -> usize {
        self.epochs * (points / self.batch_size)
    }
}

/// `lr0 · (1 − step / total)`; zero at `step == total`.
pub fn lr_at(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::ScheduleExhausted {
            step,
            total: total_steps,
        });
    }
    if step == total_steps {
        return Ok(0.0);
    }
    Ok(lr0 * (1.0 - step as f64 / total_steps as f64))
}
