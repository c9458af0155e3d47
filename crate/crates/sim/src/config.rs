use lion_core::graph::{DEFAULT_ALPHA, DEFAULT_CROSS_WEIGHT};
use lion_core::planner::{CostParams, DEFAULT_EPSILON, DEFAULT_STEP_LIMIT};
use lion_core::predictor::PredictorConfig;

use crate::error::{Result, SimError};
use crate::event::Micros;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    /// One-way network delay.
    pub rpc_us: Micros,
    pub remaster_delay_us: Micros,
    pub migrate_base_us: Micros,
    pub migrate_per_item_us: Micros,
    /// Uniform extra delay in `0..=jitter_us` added to every message.
    pub jitter_us: Micros,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            rpc_us: 500,
            remaster_delay_us: 3000,
            migrate_base_us: 10_000,
            migrate_per_item_us: 50,
            jitter_us: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Route to the home partition's primary; anything remote runs 2PC with
    /// synchronous replication.
    TwoPhaseCommit,
    /// Replica-aware routing, remastering and epoch group commit.
    Lion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    pub interval_us: Micros,
    pub alpha: f64,
    pub cross_weight: f64,
    pub cost: CostParams,
    pub epsilon: f64,
    pub step_limit: usize,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            interval_us: 10_000_000,
            alpha: DEFAULT_ALPHA,
            cross_weight: DEFAULT_CROSS_WEIGHT,
            cost: CostParams::default(),
            epsilon: DEFAULT_EPSILON,
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nodes: usize,
    pub replica_min: usize,
    pub replica_max: usize,
    /// Items per partition, for the migration delay.
    pub items_per_partition: u64,
    pub latency: LatencyModel,
    pub epoch_interval_us: Micros,
    pub epoch_txn_cap: usize,
    pub workers: usize,
    /// Execution time per operation.
    pub op_us: Micros,
    pub max_retries: u32,
    pub protocol: Protocol,
    /// Planner rounds; `None` leaves the placement alone.
    pub planner: Option<PlannerSettings>,
    /// Pre-replication from workload prediction; needs a planner.
    pub prediction: Option<PredictorConfig>,
    pub batch: bool,
    pub batch_window_us: Micros,
    pub batch_cap: usize,
    pub duration_us: Micros,
    pub warmup_us: Micros,
    pub seed: u64,
    pub keep_trace_log: bool,
    /// Re-check placement invariants after every event.
    pub check_invariants: bool,
    /// Keep per-transaction read/write values for serializability checks.
    pub record_history: bool,
    /// Keep every `n`-th outcome; 0 keeps none.
    pub outcome_every: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 4,
            replica_min: 2,
            replica_max: 4,
            items_per_partition: 1000,
            latency: LatencyModel::default(),
            epoch_interval_us: 10_000,
            epoch_txn_cap: 10_000,
            workers: 8,
            op_us: 100,
            max_retries: 3,
            protocol: Protocol::Lion,
            planner: Some(PlannerSettings::default()),
            prediction: None,
            batch: false,
            batch_window_us: 10_000,
            batch_cap: 10_000,
            duration_us: 300_000_000,
            warmup_us: 30_000_000,
            seed: 0,
            keep_trace_log: false,
            check_invariants: false,
            record_history: false,
            outcome_every: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if self.nodes == 0 {
            return bad("nodes must be positive");
        }
        if self.replica_min == 0 || self.replica_min > self.replica_max {
            return bad("replica bounds must satisfy 1 <= replica_min <= replica_max");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.epoch_interval_us == 0 || self.epoch_txn_cap == 0 {
            return bad("epoch interval and cap must be positive");
        }
        if self.batch && (self.batch_window_us == 0 || self.batch_cap == 0) {
            return bad("batch window and cap must be positive");
        }
        if self.protocol == Protocol::TwoPhaseCommit && (self.planner.is_some() || self.batch) {
            return bad("the 2PC baseline runs without planner and batching");
        }
        if self.prediction.is_some() && self.planner.is_none() {
            return bad("prediction needs the planner");
        }
        if let Some(p) = &self.planner {
            if p.interval_us == 0 {
                return bad("planning interval must be positive");
            }
        }
        if let Some(p) = &self.prediction {
            if p.interval_us == 0 {
                return bad("prediction interval must be positive");
            }
        }
        if self.warmup_us >= self.duration_us {
            return bad("warmup must be shorter than the run");
        }
        Ok(())
    }
}
