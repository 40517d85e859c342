use std::fs;
use std::path::Path;

use aasist3::eval::CostModel;
use aasist3::model::ModelConfig;
use aasist3::train::TrainConfig;
use aasist3::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs: architecture, optimization and detection costs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDocument {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub metrics: CostModel,
}

impl ConfigDocument {
    pub fn pocket() -> Self {
        ConfigDocument {
            model: ModelConfig::pocket(),
            ..ConfigDocument::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            path: String::new(),
            msg: e.to_string(),
        })?;
        let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        doc.model.validate()?;
        doc.train.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("cannot serialize config: {e}")))
    }
}
