//! Experiment files: `[section]` headers followed by `key = value` lines.
//! `#` starts a comment. Every key is optional; unset keys keep their
//! defaults.
//!
//! ```text
//! [run]
//! variant = Lion(RW)
//! duration_s = 120
//!
//! [workload]
//! kind = pairing_shift
//! period_s = 30
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use lion_core::planner::CostParams;
use lion_core::predictor::{ForecasterKind, PredictorConfig};
use lion_core::workloads::{
    DynamicScenario, DynamicStream, ScenarioKind, TpccConfig, TpccStream, TxnSource, YcsbConfig, YcsbStream,
};
use lion_sim::{PlannerSettings, Protocol, SimConfig};

use crate::error::{BenchError, Result};
use crate::variant::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    Ycsb,
    Tpcc,
    HotspotInterval,
    HotspotPosition,
    PairingShift,
}

impl WorkloadKind {
    const NAMES: [(&'static str, WorkloadKind); 5] = [
        ("ycsb", WorkloadKind::Ycsb),
        ("tpcc", WorkloadKind::Tpcc),
        ("hotspot_interval", WorkloadKind::HotspotInterval),
        ("hotspot_position", WorkloadKind::HotspotPosition),
        ("pairing_shift", WorkloadKind::PairingShift),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }

    fn scenario(self) -> Option<ScenarioKind> {
        match self {
            WorkloadKind::HotspotInterval => Some(ScenarioKind::HotspotInterval),
            WorkloadKind::HotspotPosition => Some(ScenarioKind::HotspotPosition),
            WorkloadKind::PairingShift => Some(ScenarioKind::PairingShift),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Also the base of the dynamic scenarios.
    pub ycsb: YcsbConfig,
    pub tpcc: TpccConfig,
    pub period_us: u64,
    pub layouts: usize,
    pub queries: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Ycsb,
            ycsb: YcsbConfig::default(),
            tpcc: TpccConfig::default(),
            period_us: 60_000_000,
            layouts: 4,
            queries: 3,
        }
    }
}

impl WorkloadSpec {
    pub fn is_dynamic(&self) -> bool {
        self.kind.scenario().is_some()
    }

    pub fn source(&self, seed: u64) -> Result<Box<dyn TxnSource>> {
        let mut ycsb = self.ycsb.clone();
        ycsb.seed = seed;
        Ok(match self.kind {
            WorkloadKind::Ycsb => Box::new(YcsbStream::new(ycsb)?),
            WorkloadKind::Tpcc => Box::new(TpccStream::new(TpccConfig { seed, ..self.tpcc.clone() })?),
            k => {
                let mut s = DynamicScenario::new(k.scenario().expect("dynamic kind"), ycsb);
                s.period_us = self.period_us;
                s.layouts = self.layouts;
                s.queries = self.queries;
                Box::new(DynamicStream::new(s)?)
            }
        })
    }

    /// Workload identity without the seed; runs with equal signatures are
    /// comparable.
    pub fn signature(&self) -> String {
        let y = &self.ycsb;
        let mut s = format!("{} nodes={}", self.kind.name(), y.nodes);
        match self.kind {
            WorkloadKind::Tpcc => {
                let t = &self.tpcc;
                let _ = write!(
                    s,
                    " warehouses_per_node={} districts={} customers={} items={} remote_prob={} skew={} hot_node={}",
                    t.warehouses_per_node,
                    t.districts_per_warehouse,
                    t.customers_per_district,
                    t.items,
                    t.remote_prob,
                    t.skew_factor,
                    t.hot_node
                );
            }
            _ => {
                let _ = write!(
                    s,
                    " ppn={} keys={} skew={} cross={} ops={} reads={} hot_node={} pattern={}",
                    y.partitions_per_node,
                    y.keys_per_partition,
                    y.skew_factor,
                    y.cross_ratio,
                    y.ops_per_txn,
                    y.read_fraction,
                    y.hot_node,
                    y.pattern
                );
                if self.is_dynamic() {
                    let _ = write!(s, " period_us={} layouts={} queries={}", self.period_us, self.layouts, self.queries);
                }
            }
        }
        s
    }
}

/// One experiment: a variant on a workload and a simulated cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub variant: Variant,
    pub seed: u64,
    pub clients: usize,
    pub workload: WorkloadSpec,
    /// Cluster, timing and output settings; protocol, planner, prediction
    /// and batch are filled in from the variant.
    pub sim: SimConfig,
    pub planner: PlannerSettings,
    pub predictor: PredictorConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            variant: Variant::Lion,
            seed: 0,
            clients: 256,
            workload: WorkloadSpec::default(),
            sim: SimConfig { outcome_every: 100, ..SimConfig::default() },
            planner: PlannerSettings::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl Experiment {
    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Experiment::default();
        let mut section = String::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| BenchError::Config { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(format!("unterminated section header `{line}`")))?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(format!("unknown section `{name}`; expected one of {}", SECTIONS.join(", "))));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(err(format!("`{key}` appears before any section header")));
            }
            if key.is_empty() || value.is_empty() {
                return Err(err("empty key or value".into()));
            }
            if !seen.insert((section.clone(), key.to_string())) {
                return Err(err(format!("`{key}` set twice in [{section}]")));
            }
            e.set(&section, key, value).map_err(|m| match m {
                SetError::Msg(msg) => err(msg),
                SetError::Other(b) => b,
            })?;
        }
        e.sync_nodes();
        e.validate()?;
        Ok(e)
    }

    /// Same experiment under another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Experiment { seed, ..self.clone() }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Experiment { variant, ..self.clone() }
    }

    /// Push the cluster size into the workload configs.
    pub fn sync_nodes(&mut self) {
        self.workload.ycsb.nodes = self.sim.nodes;
        self.workload.tpcc.nodes = self.sim.nodes;
    }

    pub fn sim_config(&self) -> SimConfig {
        let v = self.variant;
        let mut cfg = self.sim.clone();
        cfg.seed = self.seed;
        cfg.protocol = if v.rearrangement() { Protocol::Lion } else { Protocol::TwoPhaseCommit };
        cfg.planner = v.rearrangement().then(|| self.planner.clone());
        cfg.prediction = v.prediction().then(|| PredictorConfig { seed: self.seed, ..self.predictor.clone() });
        cfg.batch = v.batch();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(BenchError::Invalid("clients must be positive".into()));
        }
        if self.workload.ycsb.nodes != self.sim.nodes || self.workload.tpcc.nodes != self.sim.nodes {
            return Err(BenchError::Invalid("workload and cluster disagree on the node count".into()));
        }
        CostParams::new(self.planner.cost.w_r, self.planner.cost.w_m)?;
        match self.workload.kind {
            WorkloadKind::Tpcc => {}
            _ => self.workload.ycsb.validate()?,
        }
        if self.workload.is_dynamic() && self.workload.period_us == 0 {
            return Err(BenchError::Invalid("period_s must be positive".into()));
        }
        // Both the Lion and the 2PC shape must be acceptable to the simulator.
        for v in [Variant::Lion, Variant::TwoPc] {
            self.with_variant(v).sim_config().validate()?;
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), SetError> {
        let w = &mut self.workload;
        let c = &mut self.sim;
        let pl = &mut self.planner;
        let pr = &mut self.predictor;
        match (section, key) {
            ("run", "variant") => self.variant = value.parse().map_err(SetError::Other)?,
            ("run", "seed") => self.seed = num(value)?,
            ("run", "clients") => self.clients = num(value)?,
            ("run", "duration_s") => c.duration_us = secs(value)?,
            ("run", "warmup_s") => c.warmup_us = secs(value)?,
            ("run", "outcome_every") => c.outcome_every = num(value)?,

            ("workload", "kind") => {
                w.kind = WorkloadKind::NAMES.iter().find(|(n, _)| *n == value).map(|(_, k)| *k).ok_or_else(|| {
                    let names: Vec<&str> = WorkloadKind::NAMES.iter().map(|(n, _)| *n).collect();
                    SetError::Msg(format!("unknown workload `{value}`; expected one of {}", names.join(", ")))
                })?
            }
            ("workload", "partitions_per_node") => w.ycsb.partitions_per_node = num(value)?,
            ("workload", "keys_per_partition") => w.ycsb.keys_per_partition = num(value)?,
            ("workload", "skew_factor") => {
                w.ycsb.skew_factor = num(value)?;
                w.tpcc.skew_factor = w.ycsb.skew_factor;
            }
            ("workload", "hot_node") => {
                w.ycsb.hot_node = num(value)?;
                w.tpcc.hot_node = w.ycsb.hot_node;
            }
            ("workload", "cross_ratio") => w.ycsb.cross_ratio = num(value)?,
            ("workload", "ops_per_txn") => w.ycsb.ops_per_txn = num(value)?,
            ("workload", "read_fraction") => w.ycsb.read_fraction = num(value)?,
            ("workload", "pattern") => w.ycsb.pattern = num(value)?,
            ("workload", "warehouses_per_node") => w.tpcc.warehouses_per_node = num(value)?,
            ("workload", "districts_per_warehouse") => w.tpcc.districts_per_warehouse = num(value)?,
            ("workload", "customers_per_district") => w.tpcc.customers_per_district = num(value)?,
            ("workload", "items") => w.tpcc.items = num(value)?,
            ("workload", "remote_prob") => w.tpcc.remote_prob = num(value)?,
            ("workload", "period_s") => w.period_us = secs(value)?,
            ("workload", "layouts") => w.layouts = num(value)?,
            ("workload", "queries") => w.queries = num(value)?,

            ("cluster", "nodes") => c.nodes = num(value)?,
            ("cluster", "replica_min") => c.replica_min = num(value)?,
            ("cluster", "replica_max") => c.replica_max = num(value)?,
            ("cluster", "items_per_partition") => c.items_per_partition = num(value)?,
            ("cluster", "rpc_us") => c.latency.rpc_us = num(value)?,
            ("cluster", "remaster_delay_us") => c.latency.remaster_delay_us = num(value)?,
            ("cluster", "migrate_base_us") => c.latency.migrate_base_us = num(value)?,
            ("cluster", "migrate_per_item_us") => c.latency.migrate_per_item_us = num(value)?,
            ("cluster", "jitter_us") => c.latency.jitter_us = num(value)?,
            ("cluster", "epoch_interval_us") => c.epoch_interval_us = num(value)?,
            ("cluster", "epoch_txn_cap") => c.epoch_txn_cap = num(value)?,
            ("cluster", "workers") => c.workers = num(value)?,
            ("cluster", "op_us") => c.op_us = num(value)?,
            ("cluster", "max_retries") => c.max_retries = num(value)?,

            ("planner", "interval_s") => pl.interval_us = secs(value)?,
            ("planner", "alpha") => pl.alpha = num(value)?,
            ("planner", "cross_weight") => pl.cross_weight = num(value)?,
            ("planner", "epsilon") => pl.epsilon = num(value)?,
            ("planner", "step_limit") => pl.step_limit = num(value)?,
            ("planner", "w_r") => pl.cost.w_r = num(value)?,
            ("planner", "w_m") => pl.cost.w_m = num(value)?,

            ("predictor", "interval_s") => pr.interval_us = secs(value)?,
            ("predictor", "horizon") => pr.horizon = num(value)?,
            ("predictor", "beta") => pr.beta = num(value)?,
            ("predictor", "gamma_factor") => pr.gamma_factor = num(value)?,
            ("predictor", "retrain_mse") => pr.retrain_mse = num(value)?,
            ("predictor", "history") => pr.history = num(value)?,
            ("predictor", "k_fraction") => pr.k_fraction = num(value)?,
            ("predictor", "w_p") => pr.w_p = num(value)?,
            ("predictor", "epochs") => pr.epochs = num(value)?,
            ("predictor", "lr") => pr.lr = num(value)?,
            ("predictor", "forecaster") => {
                pr.forecaster = match value {
                    "lstm" => ForecasterKind::Lstm,
                    "last_value" => ForecasterKind::LastValue,
                    _ => return Err(SetError::Msg(format!("unknown forecaster `{value}`; expected lstm or last_value"))),
                }
            }

            ("batch", "window_us") => c.batch_window_us = num(value)?,
            ("batch", "cap") => c.batch_cap = num(value)?,

            _ => return Err(SetError::Msg(format!("unknown key `{key}` in [{section}]"))),
        }
        Ok(())
    }
}

const SECTIONS: [&str; 6] = ["run", "workload", "cluster", "planner", "predictor", "batch"];

enum SetError {
    Msg(String),
    Other(BenchError),
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, SetError> {
    value.parse().map_err(|_| SetError::Msg(format!("cannot parse `{value}` as a {}", short_type::<T>())))
}

fn short_type<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full)
}

/// Seconds, possibly fractional, to microseconds.
fn secs(value: &str) -> std::result::Result<u64, SetError> {
    let s: f64 = num(value)?;
    if !(s.is_finite() && s >= 0.0) {
        return Err(SetError::Msg(format!("`{value}` is not a non-negative number of seconds")));
    }
    Ok((s * 1e6).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_an_empty_file() {
        let e = Experiment::parse("# nothing\n").unwrap();
        assert_eq!(e.variant, Variant::Lion);
        assert_eq!(e.sim.duration_us, 300_000_000);
        assert_eq!(e.sim.warmup_us, 30_000_000);
        assert_eq!(e.planner.interval_us, 10_000_000);
        assert_eq!(e.sim.epoch_interval_us, 10_000);
        assert_eq!(e.sim.batch_cap, 10_000);
    }

    #[test]
    fn keys_land_in_their_fields() {
        let text = "\
[run]
variant = lion(rb)
seed = 9
duration_s = 12.5
warmup_s = 2

[workload]
kind = hotspot_interval
period_s = 20
partitions_per_node = 6
skew_factor = 0.5

[cluster]
nodes = 3
remaster_delay_us = 4000

[planner]
interval_s = 0.5
w_m = 20

[predictor]
forecaster = last_value
horizon = 3

[batch]
window_us = 2000
";
        let e = Experiment::parse(text).unwrap();
        assert_eq!(e.variant, Variant::LionRB);
        assert_eq!(e.seed, 9);
        assert_eq!(e.sim.duration_us, 12_500_000);
        assert_eq!(e.workload.kind, WorkloadKind::HotspotInterval);
        assert_eq!(e.workload.period_us, 20_000_000);
        assert_eq!(e.workload.ycsb.nodes, 3);
        assert_eq!(e.workload.ycsb.skew_factor, 0.5);
        assert_eq!(e.sim.latency.remaster_delay_us, 4000);
        assert_eq!(e.planner.interval_us, 500_000);
        assert_eq!(e.planner.cost.w_m, 20.0);
        assert_eq!(e.predictor.forecaster, ForecasterKind::LastValue);
        assert_eq!(e.sim.batch_window_us, 2000);
        let cfg = e.sim_config();
        assert!(cfg.batch && cfg.planner.is_some() && cfg.prediction.is_none());
        assert_eq!(cfg.seed, 9);
    }

    fn line_of(text: &str) -> usize {
        match Experiment::parse(text) {
            Err(BenchError::Config { line, .. }) => line,
            other => panic!("expected a line diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        assert_eq!(line_of("[run]\nseed = 1\nclients = many\n"), 3);
        assert_eq!(line_of("\n\n[runn]\n"), 3);
        assert_eq!(line_of("seed = 1\n"), 1);
        assert_eq!(line_of("[run]\nseed 1\n"), 2);
        assert_eq!(line_of("[cluster]\nnodes = 4\nnodes = 5\n"), 3);
        assert_eq!(line_of("[cluster]\n\nbogus = 1\n"), 3);
        assert_eq!(line_of("[workload]\nkind = tpch\n"), 2);
        assert_eq!(line_of("[run]\nduration_s = -3\n"), 2);
    }

    #[test]
    fn unknown_variant_lists_the_valid_names() {
        let e = Experiment::parse("[run]\nvariant = Lion(X)\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, BenchError::UnknownVariant { .. }));
        for v in Variant::ALL {
            assert!(msg.contains(v.name()), "{msg}");
        }
    }

    #[test]
    fn inconsistent_settings_are_rejected() {
        assert!(Experiment::parse("[run]\nwarmup_s = 400\n").is_err());
        assert!(Experiment::parse("[cluster]\nreplica_min = 3\nreplica_max = 2\n").is_err());
        assert!(Experiment::parse("[planner]\nw_r = 20\n").is_err());
        assert!(Experiment::parse("[run]\nclients = 0\n").is_err());
    }

    #[test]
    fn signature_ignores_seed_and_variant() {
        let a = Experiment::parse("[run]\nseed = 1\n").unwrap();
        let b = Experiment::parse("[run]\nseed = 2\nvariant = 2PC\n").unwrap();
        let c = Experiment::parse("[workload]\nskew_factor = 0.3\n").unwrap();
        assert_eq!(a.workload.signature(), b.workload.signature());
        assert_ne!(a.workload.signature(), c.workload.signature());
    }
}
