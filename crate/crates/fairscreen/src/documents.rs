//! JSON documents for trained models and threshold policies.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so a saved model reproduces its scores bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use fairscreen_core::logit::Standardization;
use fairscreen_core::{LogitModel, Outcome, ThresholdPolicy, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "fairscreen-logit/1";
pub const POLICY_FORMAT: &str = "fairscreen-policy/1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("cannot access `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("`{path}`: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("`{path}`: expected format `{expected}`, found `{found}`")]
    Format {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("`{path}`: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl DocumentError {
    pub fn is_io(&self) -> bool {
        matches!(self, DocumentError::Io { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub outcome: Outcome,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub train_config: TrainConfig,
    pub train_config_digest: String,
}

impl ModelDocument {
    pub fn new(model: &LogitModel, outcome: Outcome, feature_names: &[String]) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            outcome,
            feature_names: feature_names.to_vec(),
            weights: model.weights.clone(),
            intercept: model.intercept,
            standardization: model.standardization.clone(),
            train_config: model.train_config.clone(),
            train_config_digest: format!("{:016x}", model.train_config.digest()),
        }
    }

    pub fn model(&self) -> LogitModel {
        LogitModel {
            weights: self.weights.clone(),
            intercept: self.intercept,
            standardization: self.standardization.clone(),
            train_config: self.train_config.clone(),
        }
    }

    fn check(&self, path: &Path) -> Result<(), DocumentError> {
        let invalid = |message: String| DocumentError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        if self.format != MODEL_FORMAT {
            return Err(DocumentError::Format {
                path: path.to_path_buf(),
                expected: MODEL_FORMAT,
                found: self.format.clone(),
            });
        }
        let k = self.weights.len();
        if self.feature_names.len() != k
            || self.standardization.means.len() != k
            || self.standardization.stddevs.len() != k
        {
            return Err(invalid(format!(
                "{k} weights but {} feature names, {} means, {} stddevs",
                self.feature_names.len(),
                self.standardization.means.len(),
                self.standardization.stddevs.len()
            )));
        }
        if self
            .standardization
            .stddevs
            .iter()
            .any(|&s| s.is_nan() || s <= 0.0)
        {
            return Err(invalid("standardization stddevs must be positive".into()));
        }
        let digest = format!("{:016x}", self.train_config.digest());
        if digest != self.train_config_digest {
            return Err(invalid(format!(
                "train_config digest {digest} does not match recorded {}",
                self.train_config_digest
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub format: String,
    pub outcome: Option<Outcome>,
    pub policy: ThresholdPolicy,
}

impl PolicyDocument {
    pub fn new(policy: &ThresholdPolicy, outcome: Option<Outcome>) -> Self {
        Self {
            format: POLICY_FORMAT.to_string(),
            outcome,
            policy: policy.clone(),
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DocumentError> {
    let mut text = serde_json::to_string_pretty(value).expect("document serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DocumentError> {
    let text = fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DocumentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_model(doc: &ModelDocument, path: &Path) -> Result<(), DocumentError> {
    write_json(doc, path)
}

pub fn load_model(path: &Path) -> Result<ModelDocument, DocumentError> {
    let doc: ModelDocument = read_json(path)?;
    doc.check(path)?;
    Ok(doc)
}

pub fn save_policy(doc: &PolicyDocument, path: &Path) -> Result<(), DocumentError> {
    write_json(doc, path)
}

pub fn load_policy(path: &Path) -> Result<PolicyDocument, DocumentError> {
    let doc: PolicyDocument = read_json(path)?;
    if doc.format != POLICY_FORMAT {
        return Err(DocumentError::Format {
            path: path.to_path_buf(),
            expected: POLICY_FORMAT,
            found: doc.format,
        });
    }
    doc.policy.validate().map_err(|e| DocumentError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(doc)
}
