//! Experiment configuration files.

use std::path::{Path, PathBuf};

use decoy_core::{AttackKind, AttackSpec, KeyRateParams, ProtocolConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub attack: AttackSpec,
    pub eps_dsp: f64,
    #[serde(default)]
    pub key_params: KeyRateParams,
    pub trials: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Long-haul link: `K = 1e10`, dark rate `2e-6`, transmission `1e-3`.
    pub fn fig1() -> Self {
        Self {
            protocol: ProtocolConfig::fig1(),
            attack: AttackSpec::none(),
            eps_dsp: 1e-7,
            key_params: KeyRateParams::default(),
            trials: 100,
            seed: 1,
            output_path: None,
        }
    }

    /// Short link with `K = 1e6`, used for Monte Carlo campaigns.
    pub fn bench() -> Self {
        Self {
            protocol: ProtocolConfig::bench(),
            eps_dsp: 0.01,
            trials: 500,
            ..Self::fig1()
        }
    }

    /// Checks every invariant; returns non-fatal warnings.
    pub fn validate(&self) -> decoy_core::Result<Vec<String>> {
        let warnings = self.protocol.validate()?;
        if self.attack.kind == AttackKind::Custom {
            return Err(decoy_core::Error::Validation {
                what: "attack",
                reason: "custom detection laws can only be supplied programmatically".into(),
            });
        }
        self.attack.validate()?;
        self.key_params.validate()?;
        if !(self.eps_dsp > 0.0 && self.eps_dsp < 1.0) {
            return Err(decoy_core::Error::Validation {
                what: "eps_dsp",
                reason: format!("{} must lie in (0, 1)", self.eps_dsp),
            });
        }
        if self.trials == 0 {
            return Err(decoy_core::Error::Validation {
                what: "trials",
                reason: "at least one trial is required".into(),
            });
        }
        Ok(warnings)
    }

    /// SHA-256 of the canonical JSON form (sorted keys), ignoring
    /// `output_path`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_path = None;
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// The vacuum (`mu = 0`) source, whose detections are pure dark counts.
    pub fn vacuum_source(&self) -> Result<usize> {
        self.protocol
            .sources
            .iter()
            .position(|s| s.mu == 0.0)
            .ok_or_else(|| HarnessError::Config {
                path: "protocol.sources".into(),
                message: "dark-count experiments need a source with mu = 0".into(),
            })
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<(ExperimentConfig, Vec<String>)> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config {
        path: origin.to_string(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let warnings = config.validate().map_err(|e| HarnessError::Config {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    Ok((config, warnings))
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}
