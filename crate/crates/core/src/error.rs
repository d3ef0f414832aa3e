use std::path::PathBuf;

use thiserror::Error;

/// A violated value rule, e.g. a negative conductivity.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{rule}")]
pub struct ValidationError {
    pub rule: String,
}

impl ValidationError {
    pub fn new(rule: impl Into<String>) -> Self {
        ValidationError { rule: rule.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Failures while turning a block into candidate doublet lines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrepError {
    #[error("no groundwater data covers the centroid of block {block_id}")]
    FieldUnavailable { block_id: String },
    #[error("block {block_id}: {source}")]
    Geometry {
        block_id: String,
        #[source]
        source: GeometryError,
    },
    #[error("block {block_id}: invalid groundwater sample: {source}")]
    Sample {
        block_id: String,
        #[source]
        source: ValidationError,
    },
    #[error("invalid preparation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("line {line_id}: {reason}")]
    Line { line_id: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("model is infeasible although the empty installation should always be feasible")]
    Infeasible,
    #[error("numerical failure in simplex: {0}")]
    NumericalFailure(String),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at {context}: {message}")]
    Parse {
        path: PathBuf,
        context: String,
        message: String,
    },
    #[error("{path}: coordinates look geographic (lon/lat); a projected metric CRS is required")]
    Crs { path: PathBuf },
    #[error("{path}: row {row}: {rule}")]
    Validation { path: PathBuf, row: usize, rule: String },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        context: impl Into<String>,
        message: impl ToString,
    ) -> Self {
        IoError::Parse {
            path: path.into(),
            context: context.into(),
            message: message.to_string(),
        }
    }
}

/// Umbrella error for the pipeline entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("worker pool: {0}")]
    Pool(String),
}
