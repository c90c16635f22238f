use thiserror::Error;

/// Errors raised anywhere in the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("matrix lacks complex block structure (max deviation {deviation:.3e})")]
    Structure { deviation: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("restricted quadratic form is singular for target {target}")]
    Singular { target: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("enumeration needs {count} subsets, above the cap of {cap}; use a smaller instance or raise --cap")]
    EnumerationCap { count: u128, cap: u64 },

    #[error("sparsity budget not reachable: {0}")]
    Budget(String),

    #[error("nested array does not fit: {0}; pass an explicit mask instead")]
    Construction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
