use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incomplete cluster expansion: missing component for {0}")]
    IncompleteExpansion(String),

    #[error("degenerate generator: {0}")]
    DegenerateGenerator(String),

    #[error("ill-conditioned generator: {message} (condition estimate {condition:.3e})")]
    IllConditioned { message: String, condition: f64 },

    #[error("not unitary: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotUnitary { residual: f64, tolerance: f64 },

    #[error("extrapolation: {0}")]
    Extrapolation(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Capacity(_) => "capacity",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::IncompleteExpansion(_) => "incomplete_expansion",
            Error::DegenerateGenerator(_) => "degenerate_generator",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NotUnitary { .. } => "not_unitary",
            Error::Extrapolation(_) => "extrapolation",
            Error::Embedding(_) => "embedding",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
