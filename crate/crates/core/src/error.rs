use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at physics step {step}")]
    Divergence { step: u64 },
    #[error("action contains non-finite values")]
    NonFiniteAction,
}

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("training did not reach the threshold {threshold:.3} (best {best:.3}) after {iterations} iterations")]
    ThresholdNotReached {
        threshold: f64,
        best: f64,
        iterations: usize,
        /// Mean episode reward per iteration.
        curve: Vec<f64>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
