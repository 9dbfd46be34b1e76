//! TOML pipeline configuration. Every section is optional and falls back to
//! module defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::cloud::{DEFAULT_HU_BAND, DEFAULT_PADDING_MM};
use crate::error::{Error, Result};
use crate::model::{FeatureSet, TrainConfig};
use crate::phantom::{DatasetConfig, PhantomConfig};
use crate::sampling::{SamplerConfig, SamplerMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub padding_mm: f64,
    pub hu_band: [f64; 2],
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            padding_mm: DEFAULT_PADDING_MM,
            hu_band: [DEFAULT_HU_BAND.0, DEFAULT_HU_BAND.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    pub sampler: SamplerMode,
    pub features: FeatureSet,
    pub augment: bool,
    pub phantom: PhantomConfig,
    pub dataset: DatasetConfig,
    pub cloud: CloudConfig,
    pub sampling: SamplerConfig,
    pub augmentation: AugmentConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            sampler: SamplerMode::Rbf,
            features: FeatureSet::XyzHuP,
            augment: true,
            phantom: PhantomConfig::default(),
            dataset: DatasetConfig::default(),
            cloud: CloudConfig::default(),
            sampling: SamplerConfig::default(),
            augmentation: AugmentConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Propagate the top-level seed, feature set and augmentation switch into
    /// the module sections.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.phantom.seed = self.seed;
        c.dataset.seed = self.seed;
        c.sampling.seed = self.seed;
        c.augmentation.seed = self.seed;
        c.train.seed = self.seed;
        c.train.feature_set = self.features;
        c.train.augment = self.augment;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        if !(self.cloud.hu_band[0] < self.cloud.hu_band[1]) || !(self.cloud.padding_mm >= 0.0) {
            return Err(Error::InvalidConfig("invalid cloud section".into()));
        }
        self.phantom.validate()?;
        self.dataset.stub.validate()?;
        self.sampling.validate()?;
        self.augmentation.validate()?;
        self.train.validate()
    }
}
