//! TOML configuration files. Every field has a default, so a file only
//! needs the keys it changes; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::model::ModelConfig;
use crate::synth::DatasetConfig;
use crate::train::TrainConfig;

pub trait ConfigFile: Serialize + DeserializeOwned + Default {
    const KIND: &'static str;

    fn check(&self) -> Result<()>;
}

impl ConfigFile for GraphConfig {
    const KIND: &'static str = "graph config";

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl ConfigFile for ModelConfig {
    const KIND: &'static str = "model config";

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl ConfigFile for TrainConfig {
    const KIND: &'static str = "train config";

    fn check(&self) -> Result<()> {
        self.validate()
    }
}

impl ConfigFile for DatasetConfig {
    const KIND: &'static str = "synth config";

    fn check(&self) -> Result<()> {
        self.image.validate()?;
        self.graph.validate()
    }
}

/// Parses and validates a configuration.
pub fn parse<T: ConfigFile>(text: &str) -> Result<T> {
    let value: T = toml::from_str(text).map_err(|e| Error::parse(T::KIND, e.to_string()))?;
    value.check()?;
    Ok(value)
}

pub fn load<T: ConfigFile>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse(&text)
}

/// Defaults when `path` is `None`.
pub fn load_or_default<T: ConfigFile>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::invalid(format!("cannot render config: {e}")))
}

/// Every default in one document, one table per config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllConfigs {
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: DatasetConfig,
}

pub fn print_defaults() -> String {
    to_toml(&AllConfigs::default()).expect("defaults are representable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SamplingMode;

    #[test]
    fn defaults_round_trip() {
        assert_eq!(
            parse::<GraphConfig>(&to_toml(&GraphConfig::default()).unwrap()).unwrap(),
            GraphConfig::default()
        );
        assert_eq!(
            parse::<ModelConfig>(&to_toml(&ModelConfig::default()).unwrap()).unwrap(),
            ModelConfig::default()
        );
        assert_eq!(
            parse::<TrainConfig>(&to_toml(&TrainConfig::default()).unwrap()).unwrap(),
            TrainConfig::default()
        );
        assert_eq!(
            parse::<DatasetConfig>(&to_toml(&DatasetConfig::default()).unwrap()).unwrap(),
            DatasetConfig::default()
        );
        let all: AllConfigs = toml::from_str(&print_defaults()).unwrap();
        assert_eq!(all, AllConfigs::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let g: GraphConfig = parse("[sampler]\nmode = \"random\"\n[edges]\nk_max = 4\n").unwrap();
        assert_eq!(g.sampler.mode, SamplingMode::Random);
        assert_eq!(g.sampler.a_ratio, 0.35);
        assert_eq!(g.edges.k_max, 4);
        let t: TrainConfig = parse("epochs = 3").unwrap();
        assert_eq!(t.batch_size, 40);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(parse::<TrainConfig>("epoch = 3").is_err());
        assert!(parse::<ModelConfig>("cluster_sizes = [4, 8]").is_err());
        assert!(parse::<GraphConfig>("[edges]\np = 1.5").is_err());
        assert!(parse::<TrainConfig>("epochs = -1").is_err());
    }
}
