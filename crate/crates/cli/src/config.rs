//! `--config` files: one JSON object, every field optional.

use serde::Deserialize;
use spnorm::data::{Augmentation, SparsifySpec};
use spnorm::norm::NormKind;
use spnorm::optim::AdamWConfig;
use spnorm::spnet::ModelConfig;
use spnorm::train::TrainConfig;
use spnorm::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Name(String),
    Config(Box<ModelConfig>),
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<ModelConfig> {
        match self {
            ModelSpec::Name(n) => ModelConfig::by_name(n),
            ModelSpec::Config(c) => {
                c.validate()?;
                Ok((**c).clone())
            }
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelSpec>,
    pub norm_kind: Option<NormKind>,
    pub seed: Option<u64>,
    pub optimizer: Option<AdamWConfig>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub pool_size: Option<usize>,
    pub sparsify: Option<SparsifySpec>,
    pub augmentations: Option<Vec<Augmentation>>,
    pub smoothing: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub scales: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn model(&self) -> Result<Option<ModelConfig>> {
        let m = self.model.as_ref().map(ModelSpec::resolve).transpose()?;
        Ok(match (m, self.norm_kind) {
            (Some(m), Some(k)) => Some(m.with_norm(k)),
            (None, Some(k)) => Some(ModelConfig::micro().with_norm(k)),
            (m, None) => m,
        })
    }

    /// Overlay the fields that are set onto `base`.
    pub fn apply(&self, mut base: TrainConfig) -> Result<TrainConfig> {
        if let Some(m) = self.model()? {
            base.model = m;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { base.$f = v; })*};
        }
        set!(seed, optimizer, steps, batch_size, height, width, pool_size, sparsify, augmentations, smoothing);
        if base.steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        Ok(base)
    }
}
