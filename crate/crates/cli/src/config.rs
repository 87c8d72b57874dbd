//! The JSON run configuration: everything a run needs, strictly validated
//! (unknown keys rejected, ranges checked at parse time).

use serde::{Deserialize, Serialize};

use hblab_core::schemes::{SchemeConfig, SchemeKind};
use hblab_core::source::CorrelationModel;
use hblab_core::trainer::TrainConfig;

fn default_epochs() -> usize {
    500
}
fn default_steps() -> usize {
    100
}
fn default_batch() -> usize {
    1024
}
fn default_lr() -> f64 {
    1e-4
}
fn default_eval_samples() -> usize {
    100_000
}

/// Optimization block of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_steps")]
    pub steps_per_epoch: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub seed: u64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
}

fn default_seeds() -> Vec<u64> {
    Vec::new()
}

/// One experiment: correlation model, scheme, training setup, sweep grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub correlation: CorrelationModel,
    pub scheme: SchemeKind,
    pub scheme_config: SchemeConfig,
    pub train: TrainParams,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Sweep seeds; empty means just `train.seed`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Sweep lambda grid; `None` means just `scheme_config.lambda`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scheme_config.validate().map_err(|e| e.to_string())?;
        self.to_train_config().validate().map_err(|e| e.to_string())?;
        if let Some(ls) = &self.lambdas {
            if ls.iter().any(|&l| l <= 0.0) {
                return Err("all sweep lambdas must be > 0".into());
            }
        }
        Ok(())
    }

    /// Assemble the core training config, applying the `HB_SEED` override.
    pub fn to_train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.scheme_config.clone(), self.correlation, self.train.seed);
        cfg.epochs = self.train.epochs;
        cfg.steps_per_epoch = self.train.steps_per_epoch;
        cfg.batch_size = self.train.batch_size;
        cfg.lr = self.train.lr;
        cfg.eval_samples = self.train.eval_samples;
        if let Ok(s) = std::env::var("HB_SEED") {
            if let Ok(seed) = s.parse::<u64>() {
                cfg.seed = seed;
            }
        }
        cfg
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.to_train_config().seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn sweep_lambdas(&self) -> Vec<f64> {
        self.lambdas
            .clone()
            .unwrap_or_else(|| vec![self.scheme_config.lambda])
    }
}
