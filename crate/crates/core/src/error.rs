use thiserror::Error;

use crate::dam::RetrievalTrace;

pub type Result<T> = std::result::Result<T, DamError>;

#[derive(Debug, Error)]
pub enum DamError {
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    SymmetryViolation { max_asymmetry: f64 },

    #[error("numeric error: {0}")]
    NumericError(String),

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionError { expected: usize, found: usize },

    #[error("degenerate result: {0}")]
    DegenerateResult(String),

    #[error("argument out of domain: {0}")]
    DomainError(String),

    #[error("rejection sampler gave up after {attempts} consecutive failures")]
    RejectionBudgetExceeded { attempts: u64 },

    #[error("binary search did not reach tolerance after {steps} bisection steps")]
    BinarySearchFailed { steps: usize },

    #[error("operation needs at least two stored patterns")]
    SinglePattern,

    #[error("memory bank has no commuting family")]
    MissingCommutingFamily,

    #[error("gamma = {gamma} must be below sqrt(e)")]
    GammaTooLarge { gamma: f64 },

    #[error("contraction coefficient kappa = {kappa} is not below 1")]
    KappaNotContractive { kappa: f64 },

    #[error("epsilon = {eps} must be below the basin radius r = {r}")]
    EpsilonTooLarge { eps: f64, r: f64 },

    #[error("configuration yields no perturbed queries ({0})")]
    InsufficientQueries(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("duplicate word {0:?}")]
    DuplicateWord(String),

    #[error("non-positive variance on line {line}")]
    VarianceNonPositive { line: usize },

    #[error("retrieval failed after {} iterates", partial.iterates.len())]
    RetrievalFailed {
        source: Box<DamError>,
        partial: Box<RetrievalTrace>,
    },

    #[error("{context}")]
    InRun {
        context: String,
        source: Box<DamError>,
    },

    #[error("i/o error")]
    Io(#[from] std::io::Error),

    #[error("json error")]
    Json(#[from] serde_json::Error),

    #[error("csv error")]
    Csv(#[from] csv::Error),
}

impl DamError {
    /// True for failures caused by the filesystem or malformed input files.
    pub fn is_io(&self) -> bool {
        if let DamError::InRun { source, .. } | DamError::RetrievalFailed { source, .. } = self {
            return source.is_io();
        }
        matches!(
            self,
            DamError::Io(_)
                | DamError::Json(_)
                | DamError::Csv(_)
                | DamError::ParseError { .. }
                | DamError::DuplicateWord(_)
                | DamError::VarianceNonPositive { .. }
        )
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        DamError::InRun {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        DamError::DimensionError { expected, found }
    }
}
