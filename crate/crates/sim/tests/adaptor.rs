mod common;

use common::*;
use lion_core::graph::HeatGraph;
use lion_core::model::{NodeId, Op, PlacementMap, TxnBatch, TxnId, TxnMeta};
use lion_core::planner::{plan_to_actions, rearrange, ActionKind, CostParams, ReplicaAction};
use lion_sim::{route, Simulator, SimConfig, Workload};

fn idle_sim(cfg: SimConfig, layout: &str) -> Simulator {
    replay_sim(cfg, layout, Vec::new())
}

fn act(kind: ActionKind, v: u32, n: u32) -> ReplicaAction {
    ReplicaAction::new(kind, p(v), NodeId(n))
}

// Three nodes, five partitions; P0 is filler.
const THREE_NODE: &str = "\
0,0
1,0,1
2,2,0
3,1,0
4,2,0
5,0,1
";

#[test]
fn rearrangement_plan_lands_on_the_expected_layout() {
    let layout = PlacementMap::from_text(THREE_NODE, 3, 2, 4).unwrap();
    let shapes: [&[u32]; 7] = [&[1, 2], &[1, 2], &[3], &[4], &[4], &[5], &[5]];
    let txns: Vec<TxnMeta> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| TxnMeta::new(TxnId(i as u64), s.iter().map(|&x| Op::read(p(x), 0)).collect(), 0))
        .collect();
    let g = HeatGraph::build(&TxnBatch::new(txns).unwrap(), &layout, 10.0);
    let rp = rearrange(&g.generate_clumps(5.0), &layout, CostParams::default(), 0.1, 5).unwrap();
    let actions = plan_to_actions(&rp, &layout).unwrap();
    let cfg = SimConfig { replica_min: 2, ..quiet_cfg(3) };
    let mut sim = idle_sim(cfg, THREE_NODE);
    sim.apply_plan(actions);
    assert!(sim.plan_in_progress());
    sim.run_until(u64::MAX).unwrap();
    assert!(!sim.plan_in_progress());
    let pl = sim.cluster().placement();
    assert_eq!(pl.primary_of(p(1)).unwrap(), NodeId(0));
    assert_eq!(pl.primary_of(p(2)).unwrap(), NodeId(0));
    assert_eq!(pl.primary_of(p(3)).unwrap(), NodeId(1));
    assert_eq!(pl.primary_of(p(4)).unwrap(), NodeId(2));
    assert_eq!(pl.primary_of(p(5)).unwrap(), NodeId(1));
    assert_eq!(sim.stats().action_failures, 0);
}

#[test]
fn empty_plan_completes_at_once() {
    let mut sim = idle_sim(quiet_cfg(2), "0,0,1\n");
    sim.apply_plan(Vec::new());
    assert!(!sim.plan_in_progress());
}

#[test]
fn add_at_the_cap_waits_for_a_removal() {
    let cfg = SimConfig { replica_max: 2, ..quiet_cfg(3) };
    let mut sim = idle_sim(cfg, "0,0,1\n");
    sim.apply_plan(vec![act(ActionKind::AddReplica, 0, 2)]);
    sim.run_until(100_000).unwrap();
    assert_eq!(sim.stats().action_failures, 1);
    assert!(!sim.cluster().placement().holds_replica(p(0), NodeId(2)));

    // Listed add-first; the adaptor still removes before it adds.
    sim.apply_plan(vec![act(ActionKind::AddReplica, 0, 2), act(ActionKind::RemoveReplica, 0, 1)]);
    sim.run_until(u64::MAX).unwrap();
    let pl = sim.cluster().placement();
    assert_eq!(sim.stats().action_failures, 1);
    assert!(pl.holds_replica(p(0), NodeId(2)));
    assert!(!pl.holds_replica(p(0), NodeId(1)));
    assert_eq!(pl.live_replica_count(p(0)), 2);
}

#[test]
fn removed_replicas_are_never_routed_to() {
    // P0 on N1 with a copy on N0; P1 only on N0.
    let layout = "0,1,0\n1,0\n";
    let pl = PlacementMap::from_text(layout, 2, 1, 4).unwrap();
    assert_eq!(route(&[p(0), p(1)], &pl, CostParams::default()), NodeId(0));
    let txns = vec![txn(1, 50_000, vec![Op::read(p(0), 1), Op::write(p(1), 1, 1)])];
    let mut sim = replay_sim(quiet_cfg(2), layout, txns);
    sim.apply_plan(vec![act(ActionKind::RemoveReplica, 0, 0)]);
    assert!(!sim.cluster().placement().holds_replica(p(0), NodeId(0)));
    assert_eq!(route(&[p(0)], sim.cluster().placement(), CostParams::default()), NodeId(1));
    sim.run_until(u64::MAX).unwrap();
    let r = sim.into_result();
    assert_clean(&r);
    // Without the copy the pair cannot be made local anywhere.
    assert_eq!(r.outcomes[0].path, lion_sim::Path::Distributed2PC);
    assert_eq!(r.stats.remasters_started, 0);
}

#[test]
fn migrate_to_an_empty_node_ends_primary() {
    let mut sim = idle_sim(quiet_cfg(3), "0,0\n");
    sim.apply_plan(vec![act(ActionKind::Migrate, 0, 2)]);
    sim.run_until(u64::MAX).unwrap();
    let pl = sim.cluster().placement();
    assert_eq!(pl.primary_of(p(0)).unwrap(), NodeId(2));
    assert!(pl.holds_replica(p(0), NodeId(0)));
    assert_eq!(sim.stats().adds_done, 1);
    assert_eq!(sim.stats().remasters_done, 1);
}

#[test]
fn remasters_start_after_every_copy_lands() {
    // P0 needs a copy on N1 first; P1 already has one there.
    let mut sim = replay_sim(
        SimConfig { keep_trace_log: true, ..quiet_cfg(2) },
        "0,0\n1,0,1\n",
        Vec::new(),
    );
    sim.apply_plan(vec![
        act(ActionKind::AddReplica, 0, 1),
        act(ActionKind::Remaster, 0, 1),
        act(ActionKind::Remaster, 1, 1),
    ]);
    sim.run_until(u64::MAX).unwrap();
    let r = sim.into_result();
    let lines = trace_lines(&r);
    let added = lines.iter().find(|l| l.1 == "add_done").unwrap().0;
    let starts: Vec<u64> = lines.iter().filter(|l| l.1 == "remaster").map(|l| l.0).collect();
    assert_eq!(starts.len(), 2);
    assert!(starts.iter().all(|&t| t >= added));
    assert_eq!(r.placement.primary_of(p(0)).unwrap(), NodeId(1));
    assert_eq!(r.placement.primary_of(p(1)).unwrap(), NodeId(1));
}

#[test]
fn transactions_keep_running_during_a_plan() {
    let cfg = SimConfig { replica_min: 2, duration_us: 2_000_000, ..quiet_cfg(3) };
    let txns = (0..200).map(|i| txn(i, i * 5_000, vec![Op::read(p((i % 5 + 1) as u32), i)])).collect();
    let mut sim = replay_sim(cfg, THREE_NODE, txns);
    sim.apply_plan(vec![act(ActionKind::Migrate, 3, 2), act(ActionKind::Remaster, 1, 1)]);
    sim.run_until(u64::MAX).unwrap();
    let r = sim.into_result();
    assert_clean(&r);
    assert_eq!(r.stats.committed, 200);
}

#[test]
fn placement_must_match_the_config() {
    let mut sim = Simulator::new(quiet_cfg(3), Workload::Replay { txns: Vec::new(), partitions: 1 }).unwrap();
    assert!(sim.set_placement(PlacementMap::round_robin(2, 1, 1, 2).unwrap()).is_err());
    sim.run_until(10).unwrap();
    assert!(sim.set_placement(PlacementMap::round_robin(3, 1, 1, 2).unwrap()).is_err());
}
