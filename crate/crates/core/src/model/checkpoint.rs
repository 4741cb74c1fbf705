use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backbone, ModelConfig, SegmentationModel};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::taxonomy::LabelTaxonomy;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Serialized weights plus the configuration and taxonomy they were trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub taxonomy_version: String,
    pub taxonomy: LabelTaxonomy,
    pub params: ParamSet,
}

impl ModelCheckpoint {
    pub fn capture<B: Backbone>(model: &SegmentationModel<B>, taxonomy: &LabelTaxonomy) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: model.config().clone(),
            taxonomy_version: taxonomy.version(),
            taxonomy: taxonomy.clone(),
            params: ParamSet::capture(model.params()),
        }
    }

    pub fn restore<B: Backbone>(&self) -> Result<SegmentationModel<B>> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported checkpoint schema {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.taxonomy.version() != self.taxonomy_version {
            return Err(Error::Integrity("checkpoint taxonomy does not match its fingerprint".into()));
        }
        if self.taxonomy.len() != self.config.num_classes {
            return Err(Error::Integrity(format!(
                "checkpoint has {} classes but taxonomy lists {}",
                self.config.num_classes,
                self.taxonomy.len()
            )));
        }
        let mut model = SegmentationModel::<B>::new(self.config.clone())?;
        self.params.restore(model.params_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}
