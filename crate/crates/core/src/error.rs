use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("capacity exceeded: {len} values do not fit in {capacity} slots")]
    Capacity { len: usize, capacity: usize },

    #[error("operand alignment: {0}")]
    Alignment(String),

    #[error("multiplicative depth exhausted: {0}")]
    DepthExhausted(String),

    #[error(
        "depth budget exceeded at stage `{stage}`: needs {needed} levels, {available} available"
    )]
    DepthBudget {
        stage: String,
        needed: usize,
        available: usize,
    },

    #[error("missing rotation key for step {0}")]
    MissingKey(i64),

    #[error("encoding overflow: {0}")]
    Encoding(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
