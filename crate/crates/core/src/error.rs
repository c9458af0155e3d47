use thiserror::Error;

use crate::model::{NodeId, PartitionId};

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("unknown partition {0}")]
    UnknownPartition(PartitionId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{node} holds no replica of {partition}")]
    NoReplica { partition: PartitionId, node: NodeId },
    #[error("{node} already holds a replica of {partition}")]
    DuplicateReplica { partition: PartitionId, node: NodeId },
    #[error("{partition} already has the maximum of {max} replicas")]
    ReplicaLimit { partition: PartitionId, max: usize },
    #[error("cannot remove the primary replica of {partition} on {node}")]
    RemovePrimary { partition: PartitionId, node: NodeId },
    #[error("{node} does not hold a live secondary of {partition}")]
    NotSecondary { partition: PartitionId, node: NodeId },
    #[error("transaction touches no partitions")]
    EmptyTransaction,
    #[error("transaction batch is empty")]
    EmptyBatch,
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("history too short: need {needed} samples, have {have}")]
    HistoryTooShort { needed: usize, have: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}
