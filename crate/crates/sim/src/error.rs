use thiserror::Error;

use lion_core::model::{NodeId, PartitionId};
use lion_core::CoreError;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event at {at} is before the current time {now}")]
    PastEvent { at: u64, now: u64 },
    #[error("{node} has no replica of {partition} to remaster")]
    RemasterTarget { partition: PartitionId, node: NodeId },
    #[error("remaster of {0} conflicts with one already in flight")]
    RemasterConflict(PartitionId),
    #[error("cannot add a replica of {partition} on {node}: {reason}")]
    AddRejected { partition: PartitionId, node: NodeId, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}
