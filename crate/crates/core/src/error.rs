//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by tensor operations, network loading, dataset handling,
/// monitor fitting, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {context} (expected {expected}, found {found})")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("argument `{name}` = {value} outside domain {domain}")]
    Domain {
        name: String,
        value: f64,
        domain: String,
    },

    #[error("layer {index}: {detail}")]
    Layer { index: usize, detail: String },

    #[error("matrix is not symmetric positive-definite (ridge ladder exhausted)")]
    NotSpd,

    #[error("class {class} has no usable samples in the fit set")]
    MissingClass { class: usize },

    #[error("degenerate monitor state: {0}")]
    Degenerate(String),

    #[error("threshold not set; call fit_threshold before verdict")]
    ThresholdUnset,

    #[error("monitor kind {0} has no scalar score")]
    ScoreUnavailable(&'static str),

    #[error("dataset container: {0}")]
    Container(String),

    #[error("unknown {what}: {name} (known: {known})")]
    Unknown {
        what: &'static str,
        name: String,
        known: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn domain(name: impl Into<String>, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            name: name.into(),
            value,
            domain: domain.into(),
        }
    }
}
