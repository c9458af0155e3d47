mod common;

use common::*;
use lion_core::model::{NodeId, Op};
use lion_core::planner::CostParams;
use lion_sim::{route, Path, SimConfig, SimResult, Status, TxnOutcome};

// Zero-based nodes. P1 on N0, P2 on N2 with a copy on N0, P3 on N1, P4 on N2.
const EXAMPLE_ONE: &str = "\
0,0
1,0
2,2,0
3,1
4,2
";

fn outcome(r: &SimResult, id: u64) -> &TxnOutcome {
    r.outcomes.iter().find(|o| o.txn_id.0 == id).expect("outcome kept")
}

fn done_node(r: &SimResult, id: u64) -> String {
    trace_lines(r).into_iter().find(|(_, k, _, d)| k == "done" && d[0] == id).expect("done record").2
}

#[test]
fn worked_example_paths() {
    let txns = vec![
        txn(1, 0, vec![Op::write(p(1), 1, 11), Op::read(p(2), 2)]),
        txn(2, 0, vec![Op::write(p(3), 3, 33)]),
        txn(3, 100_000, vec![Op::write(p(3), 5, 55), Op::write(p(4), 6, 66)]),
    ];
    let r = replay(quiet_cfg(3), EXAMPLE_ONE, txns);
    assert_clean(&r);
    assert_eq!(outcome(&r, 1).path, Path::Remastered);
    assert_eq!(done_node(&r, 1), "N0");
    assert_eq!(outcome(&r, 2).path, Path::SingleNode);
    assert_eq!(done_node(&r, 2), "N1");
    assert_eq!(outcome(&r, 3).path, Path::Distributed2PC);
    assert!(r.outcomes.iter().all(|o| o.status == Status::Committed));
    assert_eq!(r.placement.primary_of(p(2)).unwrap(), NodeId(0));
    assert_eq!(r.placement.primary_of(p(1)).unwrap(), NodeId(0));
}

#[test]
fn router_on_the_worked_example() {
    let pl = lion_core::model::PlacementMap::from_text(EXAMPLE_ONE, 3, 1, 4).unwrap();
    assert_eq!(route(&[p(3)], &pl, CostParams::default()), NodeId(1));
    assert_eq!(route(&[p(1), p(2)], &pl, CostParams::default()), NodeId(0));
    let single = lion_core::model::PlacementMap::round_robin(1, 3, 1, 1).unwrap();
    assert_eq!(route(&[p(0), p(2)], &single, CostParams::default()), NodeId(0));
}

#[test]
fn concurrent_remasters_have_one_winner() {
    // P1 lives on N2 with copies on N0 and N1; both transactions want it.
    let layout = "0,0\n1,2,0,1\n2,1\n";
    let txns = vec![
        txn(1, 0, vec![Op::read(p(0), 1), Op::read(p(1), 1)]),
        txn(2, 0, vec![Op::read(p(2), 1), Op::read(p(1), 2)]),
    ];
    let r = replay(quiet_cfg(3), layout, txns);
    assert_clean(&r);
    assert_eq!(r.stats.remaster_conflicts, 1);
    assert_eq!(r.stats.remasters_done, 1);
    assert_eq!(r.placement.primary_of(p(1)).unwrap(), NodeId(0));
    assert_eq!(outcome(&r, 1).path, Path::Remastered);
    assert_eq!(outcome(&r, 2).path, Path::Distributed2PC);
    assert!(r.outcomes.iter().all(|o| o.status == Status::Committed));
}

fn paired_runs(cfg: SimConfig) -> (TxnOutcome, TxnOutcome) {
    let layout = "0,0,1\n1,1,0\n";
    let txns = vec![
        txn(1, 0, vec![Op::read(p(0), 1), Op::write(p(0), 2, 7)]),
        txn(2, 500_000, vec![Op::read(p(0), 3), Op::write(p(1), 4, 8)]),
    ];
    let mut cfg = cfg;
    cfg.replica_max = 2;
    let r = replay(cfg, layout, txns);
    assert_clean(&r);
    (outcome(&r, 1).clone(), outcome(&r, 2).clone())
}

#[test]
fn two_pc_costs_more_than_single_node() {
    let cfg = two_pc(quiet_cfg(2));
    let rpc = cfg.latency.rpc_us;
    let work = 2 * cfg.op_us;
    let (single, dist) = paired_runs(cfg);
    assert_eq!(single.path, Path::SingleNode);
    assert_eq!(dist.path, Path::Distributed2PC);
    assert!(dist.latency_us > single.latency_us);
    assert!(dist.latency_us >= work + 5 * rpc, "{dist:?}");
    assert_eq!(single.prep_us, 0);
    assert!(dist.prep_us > 0 && dist.commit_us > 0);
}

#[test]
fn phase_accounting_under_lion() {
    // Each partition only on its own node: the cross one cannot be remastered.
    let layout = "0,0\n1,1\n";
    let txns = vec![
        txn(1, 0, vec![Op::write(p(0), 1, 1)]),
        txn(2, 100_000, vec![Op::read(p(0), 2), Op::write(p(1), 2, 2)]),
    ];
    let cfg = quiet_cfg(2);
    let rpc = cfg.latency.rpc_us;
    let work = 2 * cfg.op_us;
    let r = replay(cfg, layout, txns);
    assert_clean(&r);
    let (single, dist) = (outcome(&r, 1), outcome(&r, 2));
    assert_eq!(single.path, Path::SingleNode);
    assert_eq!(single.prep_us, 0);
    assert_eq!(dist.path, Path::Distributed2PC);
    assert!(dist.latency_us - work >= 5 * rpc, "{dist:?}");
    assert!(dist.bytes > single.bytes);
}

#[test]
fn reads_wait_for_the_epoch_to_close() {
    let layout = "0,0,1\n";
    let txns = vec![
        txn(1, 0, vec![Op::write(p(0), 7, 42)]),
        txn(2, 1_000, vec![Op::read(p(0), 7), Op::write(p(0), 8, 5)]),
    ];
    let cfg = quiet_cfg(2);
    let epoch = cfg.epoch_interval_us;
    let r = replay(cfg, layout, txns);
    assert_clean(&r);
    assert!(r.stats.epoch_aborts >= 1);
    let second = r.history.iter().find(|h| h.txn.0 == 2).unwrap();
    assert_eq!(second.reads, vec![(p(0), 7, 42)]);
    // Group commit: the writer only hears back once its epoch closed.
    assert!(outcome(&r, 1).latency_us >= epoch);
}

#[test]
fn secondaries_catch_up_after_epochs_ship() {
    let layout = "0,0,1\n1,1,0\n";
    let txns = (0..20).map(|i| txn(i, i * 700, vec![Op::write(p((i % 2) as u32), i, 100 + i)])).collect();
    let mut sim = replay_sim(quiet_cfg(2), layout, txns);
    sim.run_until(u64::MAX).unwrap();
    let c = sim.cluster();
    for v in [p(0), p(1)] {
        let primary = c.primary_contents(v);
        assert_eq!(primary.len(), 10);
        for n in c.placement().secondaries_of(v).unwrap() {
            assert_eq!(c.replica_contents(v, n).unwrap(), primary);
        }
    }
}

#[test]
fn remaster_carries_the_primary_state() {
    let layout = "0,0\n1,2,0\n";
    let txns = vec![
        txn(1, 0, vec![Op::write(p(1), 1, 10), Op::write(p(1), 2, 20)]),
        txn(2, 50_000, vec![Op::read(p(0), 1), Op::read(p(1), 1)]),
    ];
    let mut sim = replay_sim(quiet_cfg(3), layout, txns);
    sim.run_until(49_999).unwrap();
    let before = sim.cluster().primary_contents(p(1));
    assert_eq!(before.len(), 2);
    sim.run_until(u64::MAX).unwrap();
    let c = sim.cluster();
    assert_eq!(c.placement().primary_of(p(1)).unwrap(), NodeId(0));
    assert_eq!(c.primary_contents(p(1)), before);
    assert_eq!(c.replica_contents(p(1), NodeId(2)).unwrap(), before);
    let r = sim.into_result();
    assert_eq!(outcome(&r, 2).path, Path::Remastered);
    assert!(outcome(&r, 2).remaster_wait_us >= 3_000);
}

#[test]
fn batch_remasters_overlap_and_respect_the_barrier() {
    let layout = "0,0\n1,2,0\n2,1\n3,2,1\n";
    let txns = vec![
        txn(1, 0, vec![Op::read(p(0), 1), Op::read(p(1), 1)]),
        txn(2, 1_000, vec![Op::read(p(2), 1), Op::read(p(3), 1)]),
    ];
    let mut cfg = quiet_cfg(3);
    cfg.batch = true;
    let r = replay(cfg, layout, txns);
    assert_clean(&r);
    let lines = trace_lines(&r);
    let at = |kind: &str, first: u64| {
        lines.iter().find(|(_, k, _, d)| k == kind && d.first() == Some(&first)).map(|l| l.0).unwrap()
    };
    let (start1, start2) = (at("remaster", 1), at("remaster", 3));
    let (done1, done2) = (at("remaster_done", 1), at("remaster_done", 3));
    // The second remaster is issued before the first is acknowledged.
    assert!(start2 < done1 && start1 < done2);
    let barrier = at("barrier", 0);
    assert!(barrier >= done1.max(done2));
    assert!(at("exec", 1) >= barrier && at("exec", 2) >= barrier);
    assert_eq!(outcome(&r, 1).path, Path::Remastered);
    assert_eq!(outcome(&r, 2).path, Path::Remastered);
}

#[test]
fn batch_of_one_matches_standard_mode() {
    let layout = "0,0,1\n1,1,0\n";
    let txns = vec![txn(1, 0, vec![Op::read(p(0), 1), Op::write(p(0), 2, 9)])];
    let standard = replay(quiet_cfg(2), layout, txns.clone());
    let mut cfg = quiet_cfg(2);
    cfg.batch = true;
    let batched = replay(cfg, layout, txns);
    let (a, b) = (outcome(&standard, 1), outcome(&batched, 1));
    assert_eq!((a.status, a.path), (b.status, b.path));
    assert_eq!(standard.history, batched.history);
    assert_eq!(standard.final_contents, batched.final_contents);
    assert!(b.latency_us >= a.latency_us);
}
