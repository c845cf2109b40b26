use thiserror::Error;

/// Errors surfaced by the event pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: polarity {value} outside {{-1, 0, 1}}")]
    Polarity { line: usize, value: i64 },

    #[error("operation requires a non-empty event stream")]
    EmptyStream,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("voxel holds {0} event(s); a reference velocity needs at least 2")]
    TooFewEvents(usize),

    #[error("node id {id} out of range for graph with {nodes} node(s)")]
    NodeOutOfRange { id: usize, nodes: usize },

    #[error("graph is disconnected under its candidate edge set")]
    Disconnected,

    #[error("node {0} has no neighbors; cannot normalize attention over an empty set")]
    IsolatedNode(usize),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parameter file: {0}")]
    ParamFile(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
