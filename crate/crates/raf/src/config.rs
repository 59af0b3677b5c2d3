//! Run configuration: TOML file, then command-line overrides.

use std::fs;
use std::path::Path;

use raf_core::features::{ABSOLUTE_COUNT, ABSOLUTE_NAMES, DEFAULT_RESOLUTION};
use raf_core::generator::GenerationRanges;
use raf_core::model::{MaskMode, ModelConfig, SplitFractions};
use raf_core::nn::AdamConfig;
use raf_core::solvers::LabelOptions;
use raf_core::{MethodCatalog, SolveConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Seed used when neither the config file nor the command line sets one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generation: GenerationConfig,
    pub solver: SolveConfig,
    pub labeling: LabelingConfig,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            generation: GenerationConfig::default(),
            solver: SolveConfig::default(),
            labeling: LabelingConfig::default(),
            features: FeatureConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Labelable matrices to produce before rebalancing.
    pub count: usize,
    /// Largest allowed ratio between class sizes; unset keeps every matrix.
    pub balance: Option<f64>,
    #[serde(flatten)]
    pub ranges: GenerationRanges,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { count: 300, balance: None, ranges: GenerationRanges::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    /// Comma-separated method list; unset means the default catalog.
    pub catalog: Option<String>,
    #[serde(flatten)]
    pub options: LabelOptions,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self { catalog: None, options: LabelOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Red and green channels plus six absolute values.
    Raf,
    /// Red, green and blue channels only.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub m: usize,
    pub mode: FeatureMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { m: DEFAULT_RESOLUTION, mode: FeatureMode::Raf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub abs_hidden: usize,
    pub head_hidden: usize,
    /// Names of absolute values to mask.
    pub mask: Vec<String>,
    pub mask_mode: MaskMode,
    pub split: SplitFractions,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let base = ModelConfig::new(DEFAULT_RESOLUTION, 2);
        Self {
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            learning_rate: base.adam.learning_rate,
            dropout: base.dropout,
            abs_hidden: base.abs_hidden,
            head_hidden: base.head_hidden,
            mask: Vec::new(),
            mask_mode: base.mask_mode,
            split: SplitFractions::default(),
        }
    }
}

impl TrainingConfig {
    /// Enabled flags in absolute-value order.
    pub fn feature_mask(&self) -> Result<[bool; ABSOLUTE_COUNT]> {
        let mut enabled = [true; ABSOLUTE_COUNT];
        for name in &self.mask {
            let i = ABSOLUTE_NAMES.iter().position(|n| n == name).ok_or_else(|| {
                Error::Invalid(format!("unknown absolute value '{name}'; expected one of {ABSOLUTE_NAMES:?}"))
            })?;
            enabled[i] = false;
        }
        Ok(enabled)
    }

    pub fn model_config(&self, m: usize, k: usize, baseline: bool) -> Result<ModelConfig> {
        let config = ModelConfig {
            m,
            k,
            feature_mask: self.feature_mask()?,
            mask_mode: self.mask_mode,
            baseline_mode: baseline,
            abs_hidden: self.abs_hidden,
            head_hidden: self.head_hidden,
            dropout: self.dropout,
            adam: AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    /// Defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        toml::from_str(&text).map_err(|source| Error::Toml { path: path.into(), source })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn catalog(&self) -> Result<MethodCatalog> {
        Ok(match &self.labeling.catalog {
            Some(list) => MethodCatalog::parse_list(list)?,
            None => MethodCatalog::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog()?;
        self.solver.validate()?;
        self.generation.ranges.validate()?;
        if let Some(r) = self.generation.balance {
            if !(r >= 1.0) {
                return Err(Error::Invalid(format!("balance ratio {r} must be at least 1")));
            }
        }
        if self.features.m == 0 {
            return Err(Error::Invalid("resolution m must be at least 1".into()));
        }
        self.training.feature_mask()?;
        self.training.split.validate()?;
        Ok(())
    }

    /// Seed for one pipeline stage, derived from the global seed.
    pub fn sub_seed(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.as_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}
