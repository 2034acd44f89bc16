use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::nn::{AttentionModuleSpec, MaskMode, NetworkSpec, StagePlacement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augment: AugmentConfig,
    /// Train on the first `n` training images only.
    pub subset_size: Option<usize>,
    /// Insert the attention module after this block.
    pub stage: Option<StagePlacement>,
    /// Overrides the attention module's mask mode.
    pub mask_mode: Option<MaskMode>,
    /// Fill `wall_seconds`; off by default so metrics files are
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 5,
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            augment: AugmentConfig::default(),
            subset_size: Some(2000),
            stage: None,
            mask_mode: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed as a no-op optimizer for diagnostics.
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!(
                "train.lr must be ≥ 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "train.momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "train.weight_decay must be ≥ 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.augment.pad_crop > 32 {
            return Err(Error::Config(
                "train.augment.pad_crop must be at most 32".into(),
            ));
        }
        Ok(())
    }

    /// Applies `stage` and `mask_mode` to `base`. A stage that contradicts an
    /// attention placement already in `base` is a configuration error.
    pub fn model_spec(&self, base: &NetworkSpec) -> Result<NetworkSpec> {
        let mut spec = base.clone();
        if let Some(stage) = self.stage {
            match &base.attention {
                Some(a) if a.stage != stage => {
                    return Err(Error::Config(format!(
                        "train.stage is {stage} but model.attention is placed at {}",
                        a.stage
                    )))
                }
                Some(_) => {}
                None => {
                    spec = spec.place_attention(stage, AttentionModuleSpec::default())?;
                }
            }
        }
        if let Some(mode) = self.mask_mode {
            match spec.attention.as_mut() {
                Some(a) => a.module.mode = mode,
                None => {
                    return Err(Error::Config(
                        "train.mask_mode is set but the model has no attention".into(),
                    ))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}
