use std::path::PathBuf;

use thiserror::Error;

use crate::machine::{GlobalAddress, ThreadletId};

pub type SimResult<T> = Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid machine configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("fault: threadlet {tid:?} accessed unallocated address {addr}; allocation map:\n{map}")]
    Fault {
        tid: Option<ThreadletId>,
        addr: GlobalAddress,
        map: String,
    },

    #[error("index {index} out of range for `{what}` of length {len}")]
    OutOfRange { what: &'static str, index: usize, len: usize },

    #[error("allocation failed: {0}")]
    Alloc(String),

    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    #[error("threadlet has {0} registers, at most 16 are allowed")]
    TooManyRegisters(usize),

    #[error("deadlock: {0}")]
    Deadlock(String),

    #[error("corrupt edge-block chain at vertex {vertex}: more than {bound} blocks visited")]
    CorruptChain { vertex: u64, bound: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sweep point {index} ({point}): {source}")]
    Sweep {
        index: usize,
        point: String,
        #[source]
        source: Box<SimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
