//! TOML configuration files: synthetic cohorts and campaigns.

use std::fs;
use std::path::{Path, PathBuf};

use fairscreen_core::{CampaignConfig, Cohort, SynthConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{load_csv, LoadError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("`{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("`{path}`: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("cohort `{path}`: {source}")]
    Cohort { path: PathBuf, source: LoadError },
}

impl ConfigError {
    pub fn is_io(&self) -> bool {
        match self {
            ConfigError::Read { .. } => true,
            ConfigError::Cohort { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads and validates a synthetic-cohort config. Missing keys take their
/// defaults.
pub fn load_synth_config(path: &Path) -> Result<SynthConfig, ConfigError> {
    let config: SynthConfig = parse(path, &read(path)?)?;
    config.validate().map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(config)
}

pub fn synth_config_to_toml(config: &SynthConfig) -> String {
    toml::to_string_pretty(config).expect("synthetic config serializes")
}

/// Where a campaign's cohort comes from. Relative paths resolve against the
/// campaign file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CohortSource {
    Csv {
        path: PathBuf,
    },
    /// Synthetic cohort from a config file, or the default config.
    Synthetic {
        config: Option<PathBuf>,
    },
}

impl Default for CohortSource {
    fn default() -> Self {
        CohortSource::Synthetic { config: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    #[serde(default)]
    pub cohort: CohortSource,
    #[serde(default)]
    pub campaign: CampaignConfig,
}

impl CampaignFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut file: CampaignFile = parse(path, &read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut file.cohort {
            CohortSource::Csv { path: p } => *p = base.join(&*p),
            CohortSource::Synthetic { config: Some(p) } => *p = base.join(&*p),
            CohortSource::Synthetic { config: None } => {}
        }
        Ok(file)
    }

    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        self.campaign.validate().map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_cohort(&self) -> Result<Cohort, ConfigError> {
        match &self.cohort {
            CohortSource::Csv { path } => load_csv(path).map_err(|source| ConfigError::Cohort {
                path: path.clone(),
                source,
            }),
            CohortSource::Synthetic { config } => {
                let (synth, path) = match config {
                    Some(p) => (load_synth_config(p)?, p.clone()),
                    None => (
                        SynthConfig::default(),
                        PathBuf::from("<default synthetic config>"),
                    ),
                };
                fairscreen_core::generate_synthetic(&synth).map_err(|e| ConfigError::Invalid {
                    path,
                    message: e.to_string(),
                })
            }
        }
    }
}
