//! Deterministic discrete-event simulation of a replicated, partitioned
//! transactional store and the transaction engine running on it.

pub mod cluster;
pub mod config;
pub mod engine;
pub mod error;
pub mod event;
pub mod trace;

pub use config::{LatencyModel, PlannerSettings, Protocol, SimConfig};
pub use engine::{route, HistoryEntry, Path, SimResult, SimStats, Simulator, Status, TxnOutcome, Workload};
pub use error::{Result, SimError};
