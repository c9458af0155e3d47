//! Seeded randomized workloads shared by the protocol suites.

use lion_core::model::Op;
use lion_sim::{PlannerSettings, SimConfig, SimResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::serial::State;
use super::{p, quiet_cfg, replay, two_pc, txn};

/// Up to 8 overlapping transactions over 4 keys in 2 partitions; reads come
/// before writes and every written value is unique.
pub fn random_history(seed: u64) -> SimResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(2..=8u64);
    let mut txns = Vec::new();
    for id in 0..count {
        let n_ops = rng.gen_range(1..=4);
        let mut reads = Vec::new();
        let mut writes = Vec::new();
        for i in 0..n_ops {
            let v = p(rng.gen_range(0..2));
            let key = rng.gen_range(0..2);
            if rng.gen_bool(0.5) {
                reads.push(Op::read(v, key));
            } else {
                writes.push(Op::write(v, key, 1000 * (id + 1) + i));
            }
        }
        reads.extend(writes);
        txns.push(txn(id, rng.gen_range(0..4_000), reads));
    }
    txns.sort_by_key(|t| t.arrival_us);
    let base = quiet_cfg(2);
    let mut cfg = SimConfig { op_us: rng.gen_range(50..400), ..base };
    cfg.latency.jitter_us = rng.gen_range(0..300);
    match rng.gen_range(0..3) {
        0 => cfg = two_pc(cfg),
        1 => cfg.batch = true,
        _ => {}
    }
    let layout = match rng.gen_range(0..3) {
        0 => "0,0,1\n1,1,0\n",
        1 => "0,0\n1,1\n",
        _ => "0,0,1\n1,0,1\n",
    };
    replay(cfg, layout, txns)
}

/// Primary contents at the end, keyed like the oracle state.
pub fn final_state(r: &SimResult) -> State {
    let mut fin = State::new();
    for (i, contents) in r.final_contents.iter().enumerate() {
        for (&k, &x) in contents {
            fin.insert((p(i as u32), k), x);
        }
    }
    fin
}

fn random_layout(rng: &mut ChaCha8Rng, nodes: u32, parts: u32) -> String {
    let mut out = String::new();
    for v in 0..parts {
        let primary = rng.gen_range(0..nodes);
        out.push_str(&format!("{v},{primary}"));
        for n in 0..nodes {
            if n != primary && rng.gen_bool(0.4) {
                out.push_str(&format!(",{n}"));
            }
        }
        out.push('\n');
    }
    out
}

/// 40 transactions on 3 nodes with the planner firing every few dozen
/// milliseconds, so remasters, plans, batches and epochs interleave.
pub fn schedule(seed: u64) -> SimResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nodes, parts) = (3u32, 6u32);
    let layout = random_layout(&mut rng, nodes, parts);
    let mut txns: Vec<_> = (0..40)
        .map(|id| {
            let k = rng.gen_range(1..=3);
            let ops = (0..k)
                .map(|i| {
                    let v = p(rng.gen_range(0..parts));
                    if rng.gen_bool(0.5) {
                        Op::read(v, rng.gen_range(0..4))
                    } else {
                        Op::write(v, rng.gen_range(0..4), id * 10 + i)
                    }
                })
                .collect();
            txn(id, rng.gen_range(0..300_000), ops)
        })
        .collect();
    txns.sort_by_key(|t| t.arrival_us);
    let mut cfg = SimConfig {
        replica_max: 3,
        duration_us: 400_000,
        op_us: rng.gen_range(50..500),
        batch: rng.gen_bool(0.5),
        batch_window_us: rng.gen_range(1_000..20_000),
        epoch_interval_us: rng.gen_range(2_000..20_000),
        workers: rng.gen_range(1..=4),
        planner: Some(PlannerSettings { interval_us: rng.gen_range(20_000..100_000), ..PlannerSettings::default() }),
        ..quiet_cfg(nodes as usize)
    };
    cfg.latency.jitter_us = rng.gen_range(0..1_000);
    cfg.latency.remaster_delay_us = rng.gen_range(500..5_000);
    cfg.latency.migrate_base_us = rng.gen_range(1_000..20_000);
    cfg.items_per_partition = 10;
    replay(cfg, &layout, txns)
}
