use thiserror::Error;

pub type Result<T> = std::result::Result<T, MnirError>;

/// Errors raised by the library.
///
/// Variants split into input problems (bad files, mismatched shapes, bad
/// configuration) and numeric failures; see [`MnirError::is_numeric`].
#[derive(Debug, Error)]
pub enum MnirError {
    #[error("empty vocabulary: no token survived pruning")]
    EmptyVocabulary,

    #[error("no documents supplied")]
    NoDocuments,

    #[error("group `{0}` has no documents")]
    EmptyGroup(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("documents with zero total count: {0:?}")]
    ZeroTotal(Vec<String>),

    #[error("factor column {column} has zero variance")]
    ZeroVarianceFactor { column: usize },

    #[error("constant response: {0}")]
    ConstantResponse(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error(
        "complete separation detected in logistic fit; refit with the ridge fallback enabled"
    )]
    Separation,

    #[error("no convergence after {iterations} iterations (last values: {})", tail(.trace))]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("PLS stage {0} collapsed: direction has zero norm")]
    StageCollapse(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn tail(trace: &[f64]) -> String {
    let start = trace.len().saturating_sub(3);
    let parts: Vec<String> = trace[start..].iter().map(|v| format!("{v:.10}")).collect();
    parts.join(", ")
}

impl MnirError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            MnirError::NonFinite(_)
                | MnirError::SingularDesign(_)
                | MnirError::Separation
                | MnirError::NonConvergence { .. }
                | MnirError::StageCollapse(_)
        )
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        MnirError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
