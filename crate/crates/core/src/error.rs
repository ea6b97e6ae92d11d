use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid MDP: {}", .0.join("; "))]
    InvalidMdp(Vec<String>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("value outside its domain: {0}")]
    Domain(String),

    #[error("invalid state-level perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("enumeration too large: {what} exceeds cap {cap}")]
    EnumerationTooLarge { what: String, cap: usize },

    #[error("exact evaluation too large: {pieces} pieces exceeds cap {cap}")]
    ExactEvaluationTooLarge { pieces: usize, cap: usize },

    #[error("oracle guard exceeded: {0}")]
    OracleGuard(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for the errors raised by a size guard rather than by bad input.
    pub fn is_cap_exceeded(&self) -> bool {
        matches!(
            self,
            Error::EnumerationTooLarge { .. }
                | Error::ExactEvaluationTooLarge { .. }
                | Error::OracleGuard(_)
        )
    }

    /// Short machine-readable kind, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::InvalidMdp(_) => "invalid-mdp",
            Error::InvalidPolicy(_) => "invalid-policy",
            Error::Domain(_) => "domain",
            Error::InvalidPerturbation(_) => "invalid-perturbation",
            Error::EnumerationTooLarge { .. } => "enumeration-too-large",
            Error::ExactEvaluationTooLarge { .. } => "exact-evaluation-too-large",
            Error::OracleGuard(_) => "oracle-guard",
            Error::UnsupportedShape(_) => "unsupported-shape",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
