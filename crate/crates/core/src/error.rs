use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} cannot be encoded with {precision} fractional bits")]
    EncodingOverflow { value: f64, precision: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dealer ran out of Beaver triples: needed {needed}, {available} left")]
    DealerUnderflow { needed: usize, available: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("client {client} has a degenerate (near-zero) norm")]
    DegenerateNorm { client: usize },

    #[error("local training diverged on client {client}")]
    Divergence { client: usize },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("report comparison error: {0}")]
    Comparison(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short category label used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::EncodingOverflow { .. } => "encoding",
            Error::Shape(_) => "shape",
            Error::DealerUnderflow { .. } => "dealer",
            Error::Parameter(_) => "parameter",
            Error::DegenerateNorm { .. } => "degenerate-norm",
            Error::Divergence { .. } => "divergence",
            Error::Partition(_) => "partition",
            Error::Dataset(_) => "dataset",
            Error::Config { .. } => "config",
            Error::Comparison(_) => "comparison",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
