#![allow(dead_code)]

pub mod scenarios;
pub mod serial;

use lion_core::model::{Op, PartitionId, PlacementMap, TxnId, TxnMeta};
use lion_sim::{Protocol, SimConfig, SimResult, Simulator, Workload};

pub fn p(i: u32) -> PartitionId {
    PartitionId(i)
}

pub fn txn(id: u64, at: u64, ops: Vec<Op>) -> TxnMeta {
    TxnMeta::new(TxnId(id), ops, at)
}

/// Short Lion run without planner, recording everything.
pub fn quiet_cfg(nodes: usize) -> SimConfig {
    SimConfig {
        nodes,
        replica_min: 1,
        planner: None,
        duration_us: 1_000_000,
        warmup_us: 0,
        record_history: true,
        keep_trace_log: true,
        check_invariants: true,
        outcome_every: 1,
        ..SimConfig::default()
    }
}

pub fn two_pc(mut cfg: SimConfig) -> SimConfig {
    cfg.protocol = Protocol::TwoPhaseCommit;
    cfg.planner = None;
    cfg.batch = false;
    cfg
}

pub fn replay_sim(cfg: SimConfig, layout: &str, txns: Vec<TxnMeta>) -> Simulator {
    let partitions = layout.lines().filter(|l| !l.trim().is_empty()).count();
    let placement = PlacementMap::from_text(layout, cfg.nodes, cfg.replica_min, cfg.replica_max).unwrap();
    let mut sim = Simulator::new(cfg, Workload::Replay { txns, partitions }).unwrap();
    sim.set_placement(placement).unwrap();
    sim
}

pub fn replay(cfg: SimConfig, layout: &str, txns: Vec<TxnMeta>) -> SimResult {
    replay_sim(cfg, layout, txns).run().unwrap()
}

/// Trace log lines as `(time, kind, node, detail)`.
pub fn trace_lines(r: &SimResult) -> Vec<(u64, String, String, Vec<u64>)> {
    r.trace_log
        .as_deref()
        .unwrap_or("")
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let detail = f[3..].iter().filter_map(|x| x.parse().ok()).collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].to_string(), detail)
        })
        .collect()
}

/// Every monitor the engine keeps stays at zero and the counts reconcile.
pub fn assert_clean(r: &SimResult) {
    let s = &r.stats;
    assert_eq!(s.invariant_failures, 0, "placement invariant broken");
    assert_eq!(s.unclosed_reads, 0, "read of an unclosed epoch committed");
    assert_eq!(s.barrier_violations, 0, "batch member ran before its barrier");
    assert_eq!(s.conflict_violations, 0, "remaster conflict without a single winner");
    assert_eq!(s.late_writes, 0, "write landed on a blocked partition");
    assert_eq!(s.generated, s.committed + s.aborted_final);
}
