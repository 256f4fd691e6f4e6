use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A sample-size (or similar) floor required by a bound was not met.
    #[error("precondition violated: {what} (required floor {floor}, got {actual})")]
    Precondition {
        what: String,
        floor: f64,
        actual: f64,
    },

    #[error("moment of order {order} does not exist for {kind}")]
    UnsupportedOrder { kind: String, order: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn floor(what: impl Into<String>, floor: f64, actual: f64) -> Self {
        Error::Precondition {
            what: what.into(),
            floor,
            actual,
        }
    }
}
