//! Gaussian-process regression with an RBF kernel, fitted by maximizing the
//! log marginal likelihood, and a small MLP behind the same interface.

mod gp;
mod kernel;
pub mod linalg;
mod mlp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

pub use gp::{
    fit_gp, fit_gp_with, log_marginal_likelihood, mll_gradient, GpFitConfig, GpModel, GpSnapshot,
    StepRule, TraceEntry, LOG_BOUND,
};
pub use kernel::{covariance_matrix, covariance_matrix_with, rbf, KernelParams};
pub use mlp::{fit_mlp, MlpConfig, MlpModel};

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{inputs} input rows but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("no training data")]
    Empty,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{name} must be positive and finite (got {value})")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    Singular { max_jitter: f64 },
    #[error("fit diverged: {0}")]
    Diverged(String),
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

/// Posterior summary at one input. Point predictors report variance 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Prediction, RegressorError>;

    fn predict_batch(&self, xs: &[Vec<f64>], exec: Execution) -> Result<Vec<Prediction>, RegressorError> {
        exec.try_map(xs, |x| self.predict(x))
    }
}

pub trait Regressor {
    type Model: Predictor;
    fn fit(&self, x: &[Vec<f64>], y: &[f64]) -> Result<Self::Model, RegressorError>;
}

/// Either fitted model, as stored by the harness.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Gp(GpModel),
    Mlp(MlpModel),
}

impl Predictor for FittedModel {
    fn input_dim(&self) -> usize {
        match self {
            FittedModel::Gp(m) => m.input_dim(),
            FittedModel::Mlp(m) => m.input_dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction, RegressorError> {
        match self {
            FittedModel::Gp(m) => m.predict(x),
            FittedModel::Mlp(m) => m.predict(x),
        }
    }
}

pub const SNAPSHOT_FORMAT_GP: &str = "partner-match/gp/1";
pub const SNAPSHOT_FORMAT_MLP: &str = "partner-match/mlp/1";

/// On-disk model file, tagged with a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format")]
pub enum ModelSnapshot {
    #[serde(rename = "partner-match/gp/1")]
    Gp(GpSnapshot),
    #[serde(rename = "partner-match/mlp/1")]
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn snapshot(&self) -> ModelSnapshot {
        match self {
            FittedModel::Gp(m) => ModelSnapshot::Gp(m.snapshot()),
            FittedModel::Mlp(m) => ModelSnapshot::Mlp(m.clone()),
        }
    }

    pub fn from_snapshot(s: &ModelSnapshot) -> Result<Self, RegressorError> {
        Ok(match s {
            ModelSnapshot::Gp(g) => FittedModel::Gp(GpModel::from_snapshot(g)?),
            ModelSnapshot::Mlp(m) => FittedModel::Mlp(m.clone()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, RegressorError> {
        let s: ModelSnapshot = serde_json::from_str(text).map_err(|e| RegressorError::Snapshot(e.to_string()))?;
        Self::from_snapshot(&s)
    }
}
