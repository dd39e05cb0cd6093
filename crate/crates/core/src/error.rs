use thiserror::Error;

/// Errors raised while building, compiling or executing looped programs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hypergraph: {0}")]
    InvalidHypergraph(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("layout too small: K = {k} but at least {required} rows are needed")]
    LayoutTooSmall { k: usize, required: usize },

    #[error(
        "capacity exceeded: {requested} positions requested but only {n_max} are distinguishable"
    )]
    Capacity { requested: usize, n_max: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("layout role mismatch: {0}")]
    Role(String),

    #[error("no termination after {passes} passes")]
    NonTermination { passes: usize },

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("decode before termination")]
    NotTerminated,

    #[error("oracle input too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
