use thiserror::Error;

use crate::radio::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("graph is disconnected; unreachable from root: {0:?}")]
    Disconnected(Vec<NodeId>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error(
        "no conflict-free cell left in {region} for {what} (node {node}; saturated neighborhood {neighborhood:?})"
    )]
    Infeasible {
        region: &'static str,
        what: String,
        node: NodeId,
        neighborhood: Vec<NodeId>,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
