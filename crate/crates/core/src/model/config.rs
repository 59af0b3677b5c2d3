use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ABSOLUTE_COUNT;
use crate::nn::AdamConfig;

/// Width of each branch output; the head sees twice this in fused mode.
pub const BRANCH_WIDTH: usize = 256;
pub const CONV1_FILTERS: usize = 32;
pub const CONV2_FILTERS: usize = 64;
pub const KERNEL: usize = 3;

/// How masked absolute values are removed from the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Masked slots stay in the input and are zeroed after normalization.
    Zero,
    /// Masked slots are dropped; the absolute branch input shrinks.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Image resolution.
    pub m: usize,
    /// Number of classes (catalog entries).
    pub k: usize,
    /// Enabled absolute values, in `ABSOLUTE_NAMES` order.
    pub feature_mask: [bool; ABSOLUTE_COUNT],
    pub mask_mode: MaskMode,
    /// Three image channels and no absolute branch.
    pub baseline_mode: bool,
    /// Hidden width of the absolute branch.
    pub abs_hidden: usize,
    /// Hidden width of the classification head.
    pub head_hidden: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl ModelConfig {
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            feature_mask: [true; ABSOLUTE_COUNT],
            mask_mode: MaskMode::Zero,
            baseline_mode: false,
            abs_hidden: 64,
            head_hidden: 256,
            dropout: 0.5,
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
        }
    }

    pub fn baseline(m: usize, k: usize) -> Self {
        Self { baseline_mode: true, ..Self::new(m, k) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m % 4 != 0 {
            return Err(Error::ConfigError(format!("resolution {} must be a positive multiple of 4", self.m)));
        }
        if self.k < 2 {
            return Err(Error::ConfigError(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.abs_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::ConfigError("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ConfigError(format!("dropout rate must lie in [0, 1), got {}", self.dropout)));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::ConfigError(format!("invalid optimizer settings {a:?}")));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::ConfigError("batch size and epoch cap must be positive".into()));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        if self.baseline_mode {
            3
        } else {
            2
        }
    }

    pub fn mask_count(&self) -> usize {
        self.feature_mask.iter().filter(|&&b| b).count()
    }

    /// Input width of the absolute branch, 0 in baseline mode.
    pub fn absolute_width(&self) -> usize {
        match (self.baseline_mode, self.mask_mode) {
            (true, _) => 0,
            (false, MaskMode::Zero) => ABSOLUTE_COUNT,
            (false, MaskMode::Strict) => self.mask_count(),
        }
    }

    /// Spatial size after the two pooling layers.
    pub fn pooled_side(&self) -> usize {
        self.m / 4
    }

    pub fn flatten_width(&self) -> usize {
        CONV2_FILTERS * self.pooled_side() * self.pooled_side()
    }

    /// Width of the vector entering the head.
    pub fn fused_width(&self) -> usize {
        if self.baseline_mode {
            BRANCH_WIDTH
        } else {
            2 * BRANCH_WIDTH
        }
    }
}
