mod common;

use common::*;
use lion_core::model::{NodeId, PartitionId, PlacementMap};
use lion_core::planner::CostParams;
use lion_core::predictor::PredictorConfig;
use lion_core::workloads::{YcsbConfig, YcsbStream};
use lion_sim::{route, PlannerSettings, SimConfig, SimResult, Simulator, Workload};
use proptest::prelude::*;

fn layout_strategy() -> impl Strategy<Value = (usize, Vec<(usize, Vec<bool>, u8)>)> {
    (1..=3usize, 1..=5usize).prop_flat_map(|(n, m)| {
        (Just(n), proptest::collection::vec((0..n, proptest::collection::vec(any::<bool>(), n), 0u8..4), m))
    })
}

fn build(n: usize, rows: &[(usize, Vec<bool>, u8)]) -> (PlacementMap, Vec<Vec<u32>>) {
    let mut text = String::new();
    let mut holders = Vec::new();
    for (i, (primary, secs, _)) in rows.iter().enumerate() {
        let mut nodes = vec![*primary as u32];
        nodes.extend((0..n as u32).filter(|&x| x != *primary as u32 && secs[x as usize]));
        let row: Vec<String> = nodes.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{i},{}\n", row.join(",")));
        holders.push(nodes);
    }
    let mut p = PlacementMap::from_text(&text, n, 1, 4).unwrap();
    for (i, (primary, _, heat)) in rows.iter().enumerate() {
        for _ in 0..*heat {
            p.record_access(PartitionId(i as u32), NodeId(*primary as u32)).unwrap();
        }
    }
    p.close_access_interval();
    (p, holders)
}

/// Exhaustive ranking: most replicas held, then cheapest, then lowest id.
fn oracle(parts: &[u32], holders: &[Vec<u32>], p: &PlacementMap, n: usize, params: CostParams) -> NodeId {
    let mut rows: Vec<(usize, f64, u32)> = (0..n as u32)
        .map(|node| {
            let mut held = 0;
            let mut cost = 0.0;
            for &v in parts {
                let h = &holders[v as usize];
                if h.contains(&node) {
                    held += 1;
                    if h[0] != node {
                        let f = p.access_freq(PartitionId(v), NodeId(h[0]));
                        cost += params.w_r * (1.0 + (f + 1.0).log2());
                    }
                } else {
                    cost += params.w_m;
                }
            }
            (held, cost, node)
        })
        .collect();
    rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2)));
    NodeId(rows[0].2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn route_matches_exhaustive_ranking((n, rows) in layout_strategy(), pick in proptest::collection::vec(any::<bool>(), 5)) {
        let (pl, holders) = build(n, &rows);
        let mut parts: Vec<u32> = (0..rows.len() as u32).filter(|&v| pick[v as usize]).collect();
        if parts.is_empty() {
            parts.push(0);
        }
        let ids: Vec<PartitionId> = parts.iter().map(|&v| PartitionId(v)).collect();
        let params = CostParams::default();
        prop_assert_eq!(route(&ids, &pl, params), oracle(&parts, &holders, &pl, n, params));
    }
}

fn closed_run(seed: u64) -> SimResult {
    let ycsb = YcsbConfig { nodes: 4, partitions_per_node: 4, seed, ..YcsbConfig::default() };
    let cfg = SimConfig {
        nodes: 4,
        duration_us: 6_000_000,
        warmup_us: 1_000_000,
        seed,
        planner: Some(PlannerSettings { interval_us: 1_000_000, ..PlannerSettings::default() }),
        prediction: Some(PredictorConfig { interval_us: 500_000, epochs: 20, seed, ..PredictorConfig::default() }),
        batch: seed % 2 == 1,
        check_invariants: true,
        ..SimConfig::default()
    };
    let source = Box::new(YcsbStream::new(ycsb).unwrap());
    Simulator::new(cfg, Workload::Closed { source, clients: 32 }).unwrap().run().unwrap()
}

#[test]
fn closed_runs_are_a_function_of_config_and_seed() {
    for seed in [1, 2] {
        let runs: Vec<SimResult> = (0..3).map(|_| closed_run(seed)).collect();
        for r in &runs[1..] {
            assert_eq!(r.trace_hash, runs[0].trace_hash);
            assert_eq!(r.stats, runs[0].stats);
            assert_eq!(r.placement, runs[0].placement);
        }
        assert_clean(&runs[0]);
        assert!(runs[0].stats.committed > 1000);
    }
    assert_ne!(closed_run(1).trace_hash, closed_run(3).trace_hash);
}
