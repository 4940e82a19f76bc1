use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum SdrError {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// An API precondition was violated by the caller.
    #[error("contract error: {0}")]
    Contract(String),

    /// Input value outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad user-supplied data (files, datasets, configs).
    #[error("input error: {0}")]
    Input(String),

    /// Non-finite values or diverging optimization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {detail}")]
    Image { path: String, detail: String },
}

impl SdrError {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        SdrError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SdrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SdrError>;
