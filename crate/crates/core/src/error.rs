use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by the stage that raises them; [`Error::category`]
/// collapses them into the three classes the command line maps to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // unit expressions
    #[error("unknown base unit `{name}` (declared: {declared})")]
    UnknownBaseUnit { name: String, declared: String },
    #[error("syntax error in unit expression `{expr}` at byte {pos}: {msg}")]
    Syntax { expr: String, pos: usize, msg: String },
    #[error("exponent {exponent} in `{expr}` exceeds the supported magnitude of 64")]
    ExponentOverflow { expr: String, exponent: i64 },

    // quantity systems
    #[error("invalid quantity system: {0}")]
    InvalidSystem(String),
    #[error(
        "dimension matrix has rank {rank} < {k} base units; \
         this may indicate some missing quantities ({hint})"
    )]
    RankDeficient { rank: usize, k: usize, hint: String },
    #[error("no dimensionless groups (m = k = {0})")]
    NoNullSpace(usize),
    #[error("output exponent system is inconsistent (residual {0:e})")]
    Inconsistent(f64),
    #[error("input {index} is {value}, but every independent variable must be strictly positive")]
    NonPositiveInput { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // quadrature
    #[error("invalid regime box: {0}")]
    InvalidBox(String),
    #[error("{what} = {value} is out of range ({allowed})")]
    OutOfRange { what: &'static str, value: usize, allowed: &'static str },
    #[error("tensor rule would have {points} points (limit {limit})")]
    TooManyPoints { points: u128, limit: u128 },

    // surrogate
    #[error("{samples} samples cannot determine {coefficients} polynomial coefficients")]
    Underdetermined { samples: usize, coefficients: usize },
    #[error("feature matrix condition estimate {0:e} exceeds 1e12")]
    IllConditioned(f64),

    // subspace
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("columns do not span the same subspace (residual {0:e})")]
    SpanMismatch(f64),
    #[error("operation needs dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },

    // pipe flow
    #[error("Colebrook iteration did not converge (last residual {0:e})")]
    NoConvergence(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown regime `{0}` (expected laminar, turbulent or high_re)")]
    UnknownRegime(String),

    // algorithms
    #[error("design of {design} points is smaller than the {needed} surrogate coefficients")]
    DesignTooSmall { design: usize, needed: usize },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),

    // io
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Failures raised while running an experiment.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment failed at point {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },
    #[error("experiment returned non-finite value {value} at point {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },
    #[error("subprocess failed on batch {batch} ({status}): {stderr}")]
    SubprocessFailure { batch: usize, status: String, stderr: String },
    #[error("could not parse output of batch {batch}, row {row}: `{text}`")]
    ParseFailure { batch: usize, row: usize, text: String },
    #[error("subprocess timed out on batch {batch} after {seconds} s")]
    Timeout { batch: usize, seconds: f64 },
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Numerical,
    Subprocess,
}

impl Error {
    pub fn category(&self) -> Category {
        use Error::*;
        match self {
            UnknownBaseUnit { .. }
            | Syntax { .. }
            | ExponentOverflow { .. }
            | InvalidSystem(_)
            | RankDeficient { .. }
            | NoNullSpace(_)
            | InvalidBox(_)
            | OutOfRange { .. }
            | TooManyPoints { .. }
            | UnknownRegime(_)
            | DesignTooSmall { .. }
            | ShapeMismatch(_)
            | Io { .. }
            | Json(_)
            | Csv(_) => Category::Config,
            Experiment(ExperimentError::SubprocessFailure { .. })
            | Experiment(ExperimentError::ParseFailure { .. })
            | Experiment(ExperimentError::Timeout { .. }) => Category::Subprocess,
            _ => Category::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
