use thiserror::Error;

/// Crate-wide error type. Numeric failures carry enough context (layer,
/// frame, epoch/step) to locate the fault without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between tensors or between a tensor and a config.
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    /// Invalid configuration value; the message names the offending field.
    #[error("invalid config: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Checkpoint or data file does not follow the documented layout.
    #[error("format error: {0}")]
    Format(String),

    /// Checkpoint version is not supported by this build.
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }
}
