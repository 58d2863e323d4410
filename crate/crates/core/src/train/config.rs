use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub eta: f64,
    pub gamma: f64,
    pub warmup_batches: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 0.0, eta: 1.0, gamma: 0.0, warmup_batches: 1000 }
    }
}

impl LossWeights {
    /// GAN-augmented setting: eta 0.9, lambda 0.1.
    pub fn gan() -> Self {
        LossWeights { lambda: 0.1, eta: 0.9, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.eta >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.warmup_batches == 0 {
            return Err(Error::InvalidArgument("warmup_batches must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    /// Stops after this many mini-batches when set.
    pub max_batches: Option<usize>,
    /// Wall-clock limit; runs stop before the first batch past it. Not reproducible.
    pub max_seconds: Option<f64>,
    pub clip_threshold: Option<f64>,
    pub seed: u64,
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2,
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 1,
            max_batches: None,
            max_seconds: None,
            clip_threshold: None,
            seed: 0,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if let Some(c) = self.clip_threshold {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("clip_threshold must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.adam_epsilon }
    }
}

fn optional<T: std::str::FromStr>(kv: &KeyValues, key: &str, target: &mut Option<T>) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    match kv.get_str(key) {
        None => Ok(()),
        Some("none") => {
            *target = None;
            Ok(())
        }
        Some(_) => {
            *target = kv.get(key)?;
            Ok(())
        }
    }
}

fn show<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

pub const TRAIN_KEYS: &[&str] = &[
    "batch_size", "learning_rate", "beta1", "beta2", "adam_epsilon", "epochs", "max_batches", "max_seconds", "clip_threshold", "seed",
    "checkpoint_every", "lambda", "eta", "gamma", "warmup_batches",
];

/// Reads the training and loss fields present in `kv`, keeping defaults for the rest.
pub fn apply_train_keys(kv: &KeyValues, config: &mut TrainConfig, weights: &mut LossWeights) -> Result<()> {
    kv.read_into("batch_size", &mut config.batch_size)?;
    kv.read_into("learning_rate", &mut config.learning_rate)?;
    kv.read_into("beta1", &mut config.beta1)?;
    kv.read_into("beta2", &mut config.beta2)?;
    kv.read_into("adam_epsilon", &mut config.adam_epsilon)?;
    kv.read_into("epochs", &mut config.epochs)?;
    optional(kv, "max_batches", &mut config.max_batches)?;
    optional(kv, "max_seconds", &mut config.max_seconds)?;
    optional(kv, "clip_threshold", &mut config.clip_threshold)?;
    kv.read_into("seed", &mut config.seed)?;
    optional(kv, "checkpoint_every", &mut config.checkpoint_every)?;
    kv.read_into("lambda", &mut weights.lambda)?;
    kv.read_into("eta", &mut weights.eta)?;
    kv.read_into("gamma", &mut weights.gamma)?;
    kv.read_into("warmup_batches", &mut weights.warmup_batches)?;
    config.validate()?;
    weights.validate()
}

pub fn train_keys(config: &TrainConfig, weights: &LossWeights) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("batch_size", config.batch_size);
    kv.set("learning_rate", config.learning_rate);
    kv.set("beta1", config.beta1);
    kv.set("beta2", config.beta2);
    kv.set("adam_epsilon", config.adam_epsilon);
    kv.set("epochs", config.epochs);
    kv.set("max_batches", show(&config.max_batches));
    kv.set("max_seconds", show(&config.max_seconds));
    kv.set("clip_threshold", show(&config.clip_threshold));
    kv.set("seed", config.seed);
    kv.set("checkpoint_every", show(&config.checkpoint_every));
    kv.set("lambda", weights.lambda);
    kv.set("eta", weights.eta);
    kv.set("gamma", weights.gamma);
    kv.set("warmup_batches", weights.warmup_batches);
    kv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_round_trip() {
        let config = TrainConfig { clip_threshold: Some(1.0), max_batches: Some(7), seed: 42, ..TrainConfig::default() };
        let weights = LossWeights::gan();
        let text = train_keys(&config, &weights).to_text();
        let (mut c2, mut w2) = (TrainConfig::default(), LossWeights::default());
        apply_train_keys(&KeyValues::parse(&text).unwrap(), &mut c2, &mut w2).unwrap();
        assert_eq!((c2, w2), (config, weights));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let (mut c, mut w) = (TrainConfig::default(), LossWeights::default());
        assert!(apply_train_keys(&KeyValues::parse("gamma=1.5").unwrap(), &mut c, &mut w).is_err());
        let (mut c, mut w) = (TrainConfig::default(), LossWeights::default());
        assert!(apply_train_keys(&KeyValues::parse("batch_size=0").unwrap(), &mut c, &mut w).is_err());
    }
}
