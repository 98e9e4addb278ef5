use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("self-link on node {0} is not allowed")]
    SelfLink(NodeId),

    #[error("invalid link quality: {0}")]
    LinkQuality(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("topology does not match configuration: {0}")]
    TopologyMismatch(String),

    #[error("slot {slot} already holds a cell on node {node}")]
    SlotBusy { node: NodeId, slot: u16 },

    #[error("plan error: {0}")]
    Plan(String),

    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            msg: err.to_string(),
        }
    }
}
