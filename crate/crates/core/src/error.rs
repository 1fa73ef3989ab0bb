use thiserror::Error;

use crate::trace::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("trace failed validation: {}", summarize(.0))]
    Validation(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("actuals have zero variance; R² is undefined")]
    UndefinedVariance,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("forest has no splits; importance is undefined")]
    NoSplits,

    #[error("operation requires a tree-based model")]
    NotATree,

    #[error("model file is corrupt: {0}")]
    CorruptModel(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("feature ordering mismatch: {0}")]
    FeatureMismatch(String),

    #[error("cell size mismatch: map uses {map} m, feature spec requests {spec} m")]
    CellSizeMismatch { map: f64, spec: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user input rather than by the tool itself.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::CorruptModel(_) | Error::Json(_))
    }
}

fn summarize(violations: &[Violation]) -> String {
    let mut out = format!("{} violation(s)", violations.len());
    for v in violations.iter().take(5) {
        out.push_str("; ");
        out.push_str(&v.to_string());
    }
    out
}
