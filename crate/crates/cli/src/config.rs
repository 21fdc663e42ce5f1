use std::path::Path;

use phonation::dataset::FeatureSet;
use phonation::ml::ModelHyper;
use phonation::mps::MpsConfig;
use phonation::stats::StatsConfig;
use phonation::ExtractionConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every tunable parameter of a run, in one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub evaluation: Evaluation,
    pub extraction: ExtractionConfig,
    pub mps: MpsConfig,
    pub stats: StatsConfig,
    pub model: ModelHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            evaluation: Evaluation::default(),
            extraction: ExtractionConfig::default(),
            mps: MpsConfig::default(),
            stats: StatsConfig::default(),
            model: ModelHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    pub repeats: usize,
    pub test_frac: f64,
    pub feature_sets: Vec<FeatureSet>,
}

impl Default for Evaluation {
    fn default() -> Self {
        Self {
            repeats: 100,
            test_frac: 0.2,
            feature_sets: FeatureSet::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}:\n{e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::usage)?;
        if self.evaluation.repeats == 0 {
            return Err(CliError::usage("evaluation.repeats must be positive"));
        }
        if !(self.evaluation.test_frac > 0.0 && self.evaluation.test_frac < 1.0) {
            return Err(CliError::usage("evaluation.test_frac must lie in (0, 1)"));
        }
        if self.evaluation.feature_sets.is_empty() {
            return Err(CliError::usage("evaluation.feature_sets must not be empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises to JSON");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
