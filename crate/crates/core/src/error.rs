use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Variants are grouped so front ends can map them onto exit classes with
/// [`Error::class`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column \"{0}\"")]
    Schema(String),

    #[error("row {row}, column \"{column}\": cannot parse {value:?} as a number")]
    Parse { row: usize, column: String, value: String },

    #[error("{0}")]
    Validation(String),

    #[error("all weights are zero; no subject is consistent with the regime")]
    DegenerateWeights,

    #[error("design matrix is singular or rank deficient")]
    SingularDesign,

    #[error("{model}: complete separation / monotone likelihood detected")]
    Separation { model: &'static str },

    #[error("{model}: Newton iterations did not converge (score norm {score_norm:.3e})")]
    NonConvergence { model: &'static str, score_norm: f64 },

    #[error("censoring survival {value:.4} at t = {time} is below the positivity floor")]
    Positivity { time: f64, value: f64 },

    #[error("weighted risk set is empty before t = {0}")]
    Truncation(f64),

    #[error("linear predictor has zero spread; bandwidth undefined")]
    DegenerateDirection,

    #[error("policy search failed: {0}")]
    SearchFailure(String),

    #[error("bootstrap failed: {failed} of {total} replicates degenerate")]
    BootstrapFailure { failed: usize, total: usize },

    #[error("study failed: {failed} of {total} replications failed")]
    StudyFailure { failed: usize, total: usize },
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Fit,
    Search,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Csv(_) | Error::Schema(_) | Error::Parse { .. } | Error::Validation(_) => {
                ErrorClass::Input
            }
            Error::SingularDesign
            | Error::Separation { .. }
            | Error::NonConvergence { .. }
            | Error::Positivity { .. }
            | Error::Truncation(_)
            | Error::DegenerateWeights
            | Error::BootstrapFailure { .. } => ErrorClass::Fit,
            Error::DegenerateDirection | Error::SearchFailure(_) | Error::StudyFailure { .. } => ErrorClass::Search,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
