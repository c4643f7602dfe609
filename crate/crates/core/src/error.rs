use std::path::PathBuf;

use thiserror::Error;

use crate::ids::{NodeId, TaskId};
use crate::time::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("event scheduled at {at} is before the current clock {clock}")]
    EventInPast { at: SimTime, clock: SimTime },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("no free slot on {node} for {task}")]
    NoSlot { task: TaskId, node: NodeId },

    #[error("{node} is dead")]
    NodeDead { node: NodeId },

    #[error("{task} has exhausted its attempts")]
    AttemptsExhausted { task: TaskId },

    #[error("task {task} is not terminal")]
    NonTerminalTask { task: TaskId },

    #[error("workload chain {chain} contains a cycle")]
    CyclicChain { chain: String },

    #[error("empty cluster")]
    EmptyCluster,

    #[error("dataset contains a single class")]
    SingleClassDataset,

    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("insufficient rows for 10-fold cross validation: {rows} (need at least {needed})")]
    InsufficientRows { rows: usize, needed: usize },

    #[error("model kind {0} is declared but not implemented")]
    UnimplementedModel(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),
}

impl Error {
    pub fn config(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error stems from user-supplied configuration rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Invalid(_) | Error::CyclicChain { .. } | Error::EmptyCluster
        )
    }
}
