use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::{ModelConfig, ModelKind};
use crate::nn::{AdaDeltaConfig, AdamWConfig, ScheduleConfig};

pub const DEFAULT_SEEDS: [u64; 5] = [42, 0, 17, 9, 3];

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    /// Seeds used by multi-run commands (ablation, robustness).
    pub seeds: Vec<u64>,
    /// Upper bound on epochs; early stopping usually ends sooner.
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adadelta: AdaDeltaConfig,
    pub adamw: AdamWConfig,
    pub schedule: ScheduleConfig,
    /// With `false`, optimizers run at their configured constant rates.
    pub one_cycle: bool,
    pub loss: LossWeights,
    /// Visual (F, P_f) parameters update every this many batches, with
    /// gradients averaged over the accumulated batches.
    pub visual_period: usize,
    /// Same for the textual (C, P_c) parameters.
    pub text_period: usize,
    /// Leading epochs that train only the visual branch (XCB).
    pub pretrain_epochs: usize,
    /// Keep the textual branch at its initial weights.
    pub freeze_text: bool,
    /// Regularization strength of the DCI regressors.
    pub dci_lambda: f64,
    /// Seed of the train/validation/test partition, kept apart from the
    /// training seed so every run sees the same split.
    pub split_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seed: 42,
            seeds: DEFAULT_SEEDS.to_vec(),
            epochs: 100,
            batch_size: 64,
            patience: 5,
            adadelta: AdaDeltaConfig::default(),
            adamw: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            one_cycle: true,
            loss: LossWeights::default(),
            visual_period: 2,
            text_period: 1,
            pretrain_epochs: 2,
            freeze_text: false,
            dci_lambda: crate::metrics::DEFAULT_DCI_LAMBDA,
            split_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self { model: ModelConfig::for_kind(kind), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        self.loss.validate()?;
        let bad = |m: &str| Err(Error::contract(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be ≥ 1");
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1");
        }
        if self.visual_period == 0 || self.text_period == 0 {
            return bad("update periods must be ≥ 1");
        }
        if self.epochs == 0 {
            return bad("epochs cap must be ≥ 1");
        }
        if !(self.dci_lambda >= 0.0) {
            return bad("DCI penalty must be ≥ 0");
        }
        Ok(())
    }
}
