//! Deterministic transaction generators: YCSB-like pairs, TPC-C NewOrder,
//! and the two dynamic hotspot scenarios.
//!
//! Partition `p` belongs to group `p / n` and initially lives on node
//! `p mod n`, so a group is a contiguous id interval holding one partition
//! per node. Cross-partition transactions pair a partition with its affinity
//! partner inside the same group: slot `j` pairs with slot `j ^ pattern`
//! (falling back to `(j + 1) mod n` when that slot does not exist).

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::model::{NodeId, Op, OpKind, PartitionId, TxnId, TxnMeta};

/// Pull-based stream; `now_us` becomes the arrival time.
pub trait TxnSource {
    fn next_txn(&mut self, now_us: u64) -> TxnMeta;
    fn partition_count(&self) -> usize;
}

/// Affinity partner slot of `slot` within a group of `n` slots.
pub fn partner_slot(slot: usize, pattern: usize, n: usize) -> usize {
    let x = slot ^ pattern;
    if x < n && x != slot {
        x
    } else {
        (slot + 1) % n
    }
}

pub fn partner_of(p: PartitionId, pattern: usize, n: usize) -> PartitionId {
    let (g, j) = (p.index() / n, p.index() % n);
    PartitionId((g * n + partner_slot(j, pattern, n)) as u32)
}

/// Node hosting `p` in the initial round-robin layout.
pub fn home_node(p: PartitionId, n: usize) -> NodeId {
    NodeId((p.index() % n) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct YcsbConfig {
    pub nodes: usize,
    pub partitions_per_node: usize,
    pub keys_per_partition: u64,
    pub skew_factor: f64,
    pub cross_ratio: f64,
    pub ops_per_txn: usize,
    pub read_fraction: f64,
    pub hot_node: usize,
    pub pattern: usize,
    pub seed: u64,
}

impl Default for YcsbConfig {
    fn default() -> Self {
        YcsbConfig {
            nodes: 4,
            partitions_per_node: 12,
            keys_per_partition: 1000,
            skew_factor: 0.8,
            cross_ratio: 1.0,
            ops_per_txn: 10,
            read_fraction: 0.9,
            hot_node: 0,
            pattern: 1,
            seed: 0,
        }
    }
}

impl YcsbConfig {
    pub fn partition_count(&self) -> usize {
        self.nodes * self.partitions_per_node
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.partitions_per_node == 0 || self.keys_per_partition == 0 {
            return Err(CoreError::Invalid("nodes, partitions and keys must be positive".into()));
        }
        for (name, v) in [
            ("skew_factor", self.skew_factor),
            ("cross_ratio", self.cross_ratio),
            ("read_fraction", self.read_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.ops_per_txn == 0 {
            return Err(CoreError::Invalid("ops_per_txn must be positive".into()));
        }
        if self.hot_node >= self.nodes {
            return Err(CoreError::Invalid(format!("hot_node {} out of range", self.hot_node)));
        }
        if self.cross_ratio > 0.0 && self.nodes < 2 {
            return Err(CoreError::Invalid("cross-partition transactions need two nodes".into()));
        }
        Ok(())
    }
}

/// Shapes one access pattern over a window of groups.
#[derive(Debug, Clone, PartialEq)]
struct PairShape {
    groups: Range<usize>,
    skew: f64,
    hot_node: usize,
    cross_ratio: f64,
    /// Pairing patterns in use; one is drawn per transaction.
    patterns: Vec<usize>,
}

struct PairGen {
    nodes: usize,
    keys: u64,
    ops: usize,
    read_fraction: f64,
}

impl PairGen {
    fn pick_node<R: Rng>(&self, shape: &PairShape, rng: &mut R) -> usize {
        let n = self.nodes;
        if n == 1 || shape.skew <= 1.0 / n as f64 {
            return rng.gen_range(0..n);
        }
        if rng.gen_bool(shape.skew) {
            shape.hot_node
        } else {
            let k = rng.gen_range(0..n - 1);
            if k >= shape.hot_node {
                k + 1
            } else {
                k
            }
        }
    }

    fn make<R: Rng>(&self, shape: &PairShape, id: u64, now: u64, rng: &mut R) -> TxnMeta {
        let node = self.pick_node(shape, rng);
        let group = rng.gen_range(shape.groups.clone());
        let home = PartitionId((group * self.nodes + node) as u32);
        let mut parts = vec![home];
        if self.nodes > 1 && shape.cross_ratio > 0.0 && rng.gen_bool(shape.cross_ratio) {
            let pattern = match shape.patterns.len() {
                1 => shape.patterns[0],
                k => shape.patterns[rng.gen_range(0..k)],
            };
            parts.push(partner_of(home, pattern, self.nodes));
        }
        let ops = (0..self.ops)
            .map(|i| {
                let p = parts[i % parts.len()];
                let key = rng.gen_range(0..self.keys);
                if rng.gen_bool(self.read_fraction) {
                    Op::read(p, key)
                } else {
                    Op::write(p, key, rng.gen())
                }
            })
            .collect();
        TxnMeta::new(TxnId(id), ops, now)
    }
}

pub struct YcsbStream {
    cfg: YcsbConfig,
    gen: PairGen,
    shape: PairShape,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl YcsbStream {
    pub fn new(cfg: YcsbConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = PairGen {
            nodes: cfg.nodes,
            keys: cfg.keys_per_partition,
            ops: cfg.ops_per_txn,
            read_fraction: cfg.read_fraction,
        };
        let shape = PairShape {
            groups: 0..cfg.partitions_per_node,
            skew: cfg.skew_factor,
            hot_node: cfg.hot_node,
            cross_ratio: cfg.cross_ratio,
            patterns: vec![cfg.pattern],
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(YcsbStream { cfg, gen, shape, rng, next_id: 0 })
    }
}

impl TxnSource for YcsbStream {
    fn next_txn(&mut self, now_us: u64) -> TxnMeta {
        let id = self.next_id;
        self.next_id += 1;
        self.gen.make(&self.shape, id, now_us, &mut self.rng)
    }

    fn partition_count(&self) -> usize {
        self.cfg.partition_count()
    }
}

impl Iterator for YcsbStream {
    type Item = TxnMeta;

    fn next(&mut self) -> Option<TxnMeta> {
        let now = self.next_id;
        Some(self.next_txn(now))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpccConfig {
    pub nodes: usize,
    pub warehouses_per_node: usize,
    pub districts_per_warehouse: u64,
    pub customers_per_district: u64,
    pub items: u64,
    pub remote_prob: f64,
    pub skew_factor: f64,
    pub hot_node: usize,
    pub seed: u64,
}

impl Default for TpccConfig {
    fn default() -> Self {
        TpccConfig {
            nodes: 4,
            warehouses_per_node: 24,
            districts_per_warehouse: 10,
            customers_per_district: 3000,
            items: 100_000,
            remote_prob: 0.1,
            skew_factor: 0.0,
            hot_node: 0,
            seed: 0,
        }
    }
}

const TPCC_DISTRICT_BASE: u64 = 1;
const TPCC_CUSTOMER_BASE: u64 = 1_000;
const TPCC_STOCK_BASE: u64 = 1_000_000;

/// NewOrder: read the warehouse, bump the district counter, read the
/// customer, then update 5 to 15 stock rows. A remote order takes some of
/// its stock from the home warehouse's affinity partner.
pub struct TpccStream {
    cfg: TpccConfig,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl TpccStream {
    pub fn new(cfg: TpccConfig) -> Result<Self> {
        if cfg.nodes == 0 || cfg.warehouses_per_node == 0 || cfg.districts_per_warehouse == 0 {
            return Err(CoreError::Invalid("tpcc sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.remote_prob) || !(0.0..=1.0).contains(&cfg.skew_factor) {
            return Err(CoreError::Invalid("tpcc probabilities must lie in [0, 1]".into()));
        }
        if cfg.remote_prob > 0.0 && cfg.nodes < 2 {
            return Err(CoreError::Invalid("remote orders need two nodes".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(TpccStream { cfg, rng, next_id: 0 })
    }
}

impl TxnSource for TpccStream {
    fn next_txn(&mut self, now_us: u64) -> TxnMeta {
        let cfg = &self.cfg;
        let n = cfg.nodes;
        let gen = PairGen { nodes: n, keys: 1, ops: 1, read_fraction: 1.0 };
        let shape = PairShape {
            groups: 0..cfg.warehouses_per_node,
            skew: cfg.skew_factor,
            hot_node: cfg.hot_node,
            cross_ratio: 0.0,
            patterns: vec![1],
        };
        let rng = &mut self.rng;
        let node = gen.pick_node(&shape, rng);
        let group = rng.gen_range(0..cfg.warehouses_per_node);
        let home = PartitionId((group * n + node) as u32);
        let remote = if n > 1 && cfg.remote_prob > 0.0 && rng.gen_bool(cfg.remote_prob) {
            Some(partner_of(home, 1, n))
        } else {
            None
        };
        let district = rng.gen_range(0..cfg.districts_per_warehouse);
        let customer = rng.gen_range(0..cfg.customers_per_district);
        let mut ops = vec![
            Op::read(home, 0),
            Op::write(home, TPCC_DISTRICT_BASE + district, rng.gen()),
            Op::read(home, TPCC_CUSTOMER_BASE + district * cfg.customers_per_district + customer),
        ];
        let lines = rng.gen_range(5..=15);
        for i in 0..lines {
            let supply = match remote {
                Some(r) if i == 0 || rng.gen_bool(0.1) => r,
                _ => home,
            };
            ops.push(Op::write(supply, TPCC_STOCK_BASE + rng.gen_range(0..cfg.items), rng.gen()));
        }
        let id = self.next_id;
        self.next_id += 1;
        TxnMeta::new(TxnId(id), ops, now_us)
    }

    fn partition_count(&self) -> usize {
        self.cfg.nodes * self.cfg.warehouses_per_node
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    HotspotInterval,
    HotspotPosition,
    /// Skewed, fully cross-partition YCSB over all partitions whose pairing
    /// pattern alternates between two partners every period.
    PairingShift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScenario {
    pub kind: ScenarioKind,
    pub base: YcsbConfig,
    pub period_us: u64,
    /// HotspotInterval: distinct layouts cycled through. Even layouts use
    /// the lower half of the groups, odd ones the upper half, and every
    /// second visit to a half switches the pairing pattern.
    pub layouts: usize,
    pub queries: usize,
}

impl DynamicScenario {
    pub fn new(kind: ScenarioKind, base: YcsbConfig) -> Self {
        DynamicScenario { kind, base, period_us: 60_000_000, layouts: 4, queries: 3 }
    }

    pub fn period_index(&self, now_us: u64) -> usize {
        (now_us / self.period_us.max(1)) as usize
    }

    /// Access shapes active during period `k`, one per query.
    fn shapes(&self, k: usize) -> Vec<PairShape> {
        let n = self.base.nodes;
        let groups = self.base.partitions_per_node;
        match self.kind {
            ScenarioKind::HotspotInterval => {
                let layout = k % self.layouts.max(1);
                let half = groups / 2;
                let range = if layout % 2 == 0 { 0..half.max(1) } else { half..groups };
                let patterns: Vec<usize> = (1..n.max(2)).collect();
                let pattern = patterns[(layout / 2) % patterns.len()];
                let q = self.queries.max(1).min(range.len());
                let span = range.len();
                (0..q)
                    .map(|i| PairShape {
                        groups: range.start + i * span / q..range.start + (i + 1) * span / q,
                        skew: 0.0,
                        hot_node: 0,
                        cross_ratio: 1.0,
                        patterns: vec![pattern],
                    })
                    .collect()
            }
            ScenarioKind::HotspotPosition => {
                let block = (groups / 4).max(1);
                let phase = k % 4;
                let start = (phase * block).min(groups - block);
                let (skew, cross, hot) = match phase {
                    0 => (0.0, 0.5, 0),
                    1 => (self.base.skew_factor, 0.5, self.base.hot_node),
                    2 => (self.base.skew_factor, 1.0, self.base.hot_node),
                    _ => (self.base.skew_factor, 1.0, (self.base.hot_node + 1) % n),
                };
                vec![PairShape {
                    groups: start..start + block,
                    skew,
                    hot_node: hot,
                    cross_ratio: if n > 1 { cross } else { 0.0 },
                    patterns: vec![self.base.pattern],
                }]
            }
            ScenarioKind::PairingShift => {
                let first = self.base.pattern;
                let second = first % (n - 1).max(1) + 1;
                let patterns = if k % 2 == 0 { vec![first] } else { vec![second] };
                vec![PairShape {
                    groups: 0..groups,
                    skew: self.base.skew_factor,
                    hot_node: self.base.hot_node,
                    cross_ratio: if n > 1 { 1.0 } else { 0.0 },
                    patterns,
                }]
            }
        }
    }

    /// Partitions touched during period `k`.
    pub fn period_partitions(&self, k: usize) -> Vec<PartitionId> {
        let n = self.base.nodes;
        let mut out: Vec<PartitionId> = self
            .shapes(k)
            .iter()
            .flat_map(|s| s.groups.clone())
            .flat_map(|g| (0..n).map(move |j| PartitionId((g * n + j) as u32)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Partitions on the hot node during period `k`; empty when the period
    /// is uniform.
    pub fn hot_set(&self, k: usize) -> Vec<PartitionId> {
        let n = self.base.nodes;
        let mut out = Vec::new();
        for s in self.shapes(k) {
            if s.skew > 1.0 / n as f64 {
                out.extend(s.groups.clone().map(|g| PartitionId((g * n + s.hot_node) as u32)));
            }
        }
        out
    }
}

pub struct DynamicStream {
    scenario: DynamicScenario,
    gen: PairGen,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl DynamicStream {
    pub fn new(scenario: DynamicScenario) -> Result<Self> {
        scenario.base.validate()?;
        if scenario.period_us == 0 {
            return Err(CoreError::Invalid("period must be positive".into()));
        }
        if scenario.base.partitions_per_node < 2 {
            return Err(CoreError::Invalid("dynamic scenarios need two groups".into()));
        }
        let b = &scenario.base;
        let gen = PairGen {
            nodes: b.nodes,
            keys: b.keys_per_partition,
            ops: b.ops_per_txn,
            read_fraction: b.read_fraction,
        };
        let rng = ChaCha8Rng::seed_from_u64(b.seed);
        Ok(DynamicStream { scenario, gen, rng, next_id: 0 })
    }

    pub fn scenario(&self) -> &DynamicScenario {
        &self.scenario
    }
}

impl TxnSource for DynamicStream {
    fn next_txn(&mut self, now_us: u64) -> TxnMeta {
        let shapes = self.scenario.shapes(self.scenario.period_index(now_us));
        let shape = &shapes[self.rng.gen_range(0..shapes.len())];
        let id = self.next_id;
        self.next_id += 1;
        self.gen.make(shape, id, now_us, &mut self.rng)
    }

    fn partition_count(&self) -> usize {
        self.scenario.base.partition_count()
    }
}

/// Text trace, one `arrival_us txn_id partition_list op_list` line per
/// transaction. Partitions are comma separated; ops are `R:p:key` or
/// `W:p:key:payload`, comma separated.
pub fn trace_to_text(txns: &[TxnMeta]) -> String {
    let mut out = String::new();
    for t in txns {
        let parts: Vec<String> = t.parts.iter().map(|p| p.0.to_string()).collect();
        let ops: Vec<String> = t
            .ops
            .iter()
            .map(|o| match o.kind {
                OpKind::Read => format!("R:{}:{}", o.partition.0, o.key),
                OpKind::Write => format!("W:{}:{}:{}", o.partition.0, o.key, o.payload),
            })
            .collect();
        let _ = writeln!(out, "{} {} {} {}", t.arrival_us, t.id.0, parts.join(","), ops.join(","));
    }
    out
}

pub fn trace_from_text(text: &str) -> Result<Vec<TxnMeta>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CoreError::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
        let arrival = num(fields[0])?;
        let id = num(fields[1])?;
        let mut ops = Vec::new();
        for spec in fields[3].split(',') {
            let bits: Vec<&str> = spec.split(':').collect();
            let op = match (bits.first().copied(), bits.len()) {
                (Some("R"), 3) => Op::read(PartitionId(num(bits[1])? as u32), num(bits[2])?),
                (Some("W"), 4) => Op::write(PartitionId(num(bits[1])? as u32), num(bits[2])?, num(bits[3])?),
                _ => return Err(err(format!("bad op {spec:?}"))),
            };
            ops.push(op);
        }
        let t = TxnMeta::new(TxnId(id), ops, arrival);
        let listed: Vec<u32> =
            fields[2].split(',').map(|s| num(s).map(|v| v as u32)).collect::<Result<_>>()?;
        if listed != t.parts.iter().map(|p| p.0).collect::<Vec<_>>() {
            return Err(err("partition list disagrees with ops".into()));
        }
        out.push(t);
    }
    Ok(out)
}
