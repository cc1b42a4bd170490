//! Covariate preparation and fixed-effects beta regression.

mod beta;
mod table;
mod transform;

use thiserror::Error;

pub use beta::{
    beta_fit, beta_loglik, beta_score, coefficient_report, trigamma, write_coefficients_csv, BetaFit, CoefRow, Design,
};
pub use table::{build_feature_table, ColumnInfo, ColumnKind, FeatureReport, FeatureTable, Formula, MORAL_COLUMNS};
pub use transform::{min_max, moments, standardize, yeo_johnson, yeo_johnson_loglik, Moments};

#[derive(Debug, Error, PartialEq)]
pub enum StatError {
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("column {0:?} is constant")]
    ConstantColumn(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("formula: {0}")]
    Formula(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("design is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("no convergence after {iterations} iterations (max |score| {grad_norm:e})")]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        trajectory: Vec<f64>,
    },
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StatError {
    fn from(e: std::io::Error) -> Self {
        StatError::Io(e.to_string())
    }
}

impl From<csv::Error> for StatError {
    fn from(e: csv::Error) -> Self {
        StatError::Format(e.to_string())
    }
}
