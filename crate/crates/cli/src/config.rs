use std::path::Path;

use serde::{Deserialize, Serialize};

use bytesgan::dataset::SplitSpec;
use bytesgan::eval::{Experiment1Config, Experiment2Config, SyntheticBenchmark};
use bytesgan::pbv::FilterPolicy;
use bytesgan::training::{CnnTrainConfig, SganTrainConfig};
use bytesgan::{Error, Result};

/// The single configuration document shared by every command. Missing
/// sections take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterPolicy,
    pub split: SplitSpec,
    pub sgan: SganTrainConfig,
    pub cnn: CnnTrainConfig,
    pub experiment1: Experiment1Config,
    pub experiment2: Experiment2Config,
    pub synthetic: SyntheticBenchmark,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every field, defaults included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.split.seed = s;
            self.sgan.seed = s;
            self.cnn.seed = s;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_at_any_depth() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sgan": {"batch_size": 8}}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sgan": {"batchsize": 8}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn resolved_copy_round_trips() {
        let cfg = RunConfig::default().with_seed(Some(9));
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.sgan.seed, 9);
    }
}
