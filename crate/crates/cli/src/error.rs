//! CLI error kinds and their process exit codes.

use thiserror::Error;

use easq_core::diffcore::DiffError;
use easq_core::evaluator::EvalError;
use easq_core::simenv::SimError;
use easq_core::trainer::{CkptError, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Insufficient(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Config(m),
            SimError::InsufficientData(m) => CliError::Insufficient(m),
        }
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::InvalidArg(m) => CliError::Config(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::NanLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::UnknownItem { .. } => CliError::Data(e.to_string()),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Diff(d) => d.into(),
        }
    }
}

impl From<CkptError> for CliError {
    fn from(e: CkptError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(m) => CliError::Config(m),
            EvalError::InsufficientData(m) => CliError::Insufficient(m),
            EvalError::Diff(d) => d.into(),
        }
    }
}
