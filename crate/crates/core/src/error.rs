use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("input array is empty")]
    EmptyInput,

    #[error("NaN value at position {position}")]
    NanInput { position: usize },

    #[error("position {position} out of bounds for length {len}")]
    OutOfBounds { position: usize, len: usize },

    #[error("inverted range: l = {l} > r = {r}")]
    InvertedRange { l: usize, r: usize },

    #[error("hierarchy was built without index tracking")]
    IndexUntracked,

    #[error("query batch is empty")]
    EmptyBatch,

    #[error("query {query_id}: {source}")]
    Query {
        query_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("array of length {n} exceeds the full-table cap of {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn in_query(self, query_id: usize) -> Self {
        Error::Query { query_id, source: Box::new(self) }
    }
}
