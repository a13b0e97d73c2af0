use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("layer {index}: {message}")]
    InvalidLayer { index: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("cluster must not be empty")]
    EmptyCluster,

    #[error("cluster count {requested} out of range 1..={max}")]
    ClusterCount { requested: usize, max: usize },

    #[error("cluster assignments are not nested")]
    NotNested,

    #[error("elite buffer is empty")]
    EmptyBuffer,

    #[error("invalid search domain: {0}")]
    InvalidDomain(String),

    #[error("target unreachable in domain: lower corner has flops ratio {lower_ratio} > {target}")]
    TargetUnreachable { target: f64, lower_ratio: f64 },

    #[error("gaussian process: {0}")]
    Gp(String),

    #[error("environment: {message}")]
    Environment {
        message: String,
        payload: Option<String>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
