use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator and its experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("query failed: {0}")]
    Query(String),
    #[error("population cap of {cap} exceeded")]
    Capacity { cap: usize },
    #[error("internal consistency violated: {0}")]
    Consistency(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{} replica(s) failed: seeds {seeds:?}: {first}", seeds.len())]
    PartialFailure { seeds: Vec<u64>, first: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
