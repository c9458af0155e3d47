//! Shared vocabulary: nodes, partitions, replicas, transactions and the
//! placement map every other module queries.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Heat carried into the next sampling interval.
pub const ACCESS_DECAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionId(pub u32);

impl PartitionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplicaRole {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaState {
    pub partition: PartitionId,
    pub node: NodeId,
    pub role: ReplicaRole,
    pub applied_epoch: u64,
    /// Tombstone: the replica gets no more epochs and is dropped at the next
    /// epoch boundary.
    pub delete_flag: bool,
    /// Normalized access frequency `f(v, n)` in `[0, 1]`.
    pub access_freq: f64,
    raw_count: u64,
    heat: f64,
}

impl ReplicaState {
    fn new(partition: PartitionId, node: NodeId, role: ReplicaRole) -> Self {
        ReplicaState {
            partition,
            node,
            role,
            applied_epoch: 0,
            delete_flag: false,
            access_freq: 0.0,
            raw_count: 0,
            heat: 0.0,
        }
    }

    pub fn is_live(&self) -> bool {
        !self.delete_flag
    }

    /// Accesses recorded in the currently open sampling interval.
    pub fn raw_count(&self) -> u64 {
        self.raw_count
    }
}

/// Which node holds the primary and which hold secondaries of every
/// partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementMap {
    node_count: usize,
    replica_min: usize,
    replica_max: usize,
    replicas: Vec<Vec<ReplicaState>>,
}

impl PlacementMap {
    /// Round-robin layout: primary of partition `i` on node `i mod n`, the
    /// `j`-th secondary on node `(i + j) mod n`.
    pub fn round_robin(
        node_count: usize,
        partition_count: usize,
        replica_min: usize,
        replica_max: usize,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(CoreError::Invalid("cluster needs at least one node".into()));
        }
        if replica_min == 0 || replica_min > replica_max {
            return Err(CoreError::Invalid(format!(
                "replica bounds {replica_min}..={replica_max} are not valid"
            )));
        }
        let copies = replica_min.min(node_count);
        let replicas = (0..partition_count)
            .map(|i| {
                let v = PartitionId(i as u32);
                (0..copies)
                    .map(|j| {
                        let node = NodeId(((i + j) % node_count) as u32);
                        let role = if j == 0 { ReplicaRole::Primary } else { ReplicaRole::Secondary };
                        ReplicaState::new(v, node, role)
                    })
                    .collect()
            })
            .collect();
        Ok(PlacementMap { node_count, replica_min, replica_max, replicas })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn partition_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn replica_min(&self) -> usize {
        self.replica_min
    }

    pub fn replica_max(&self) -> usize {
        self.replica_max
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count as u32).map(NodeId)
    }

    pub fn partitions(&self) -> impl Iterator<Item = PartitionId> {
        (0..self.replicas.len() as u32).map(PartitionId)
    }

    pub fn contains(&self, v: PartitionId) -> bool {
        v.index() < self.replicas.len()
    }

    fn group(&self, v: PartitionId) -> Result<&Vec<ReplicaState>> {
        self.replicas.get(v.index()).ok_or(CoreError::UnknownPartition(v))
    }

    fn group_mut(&mut self, v: PartitionId) -> Result<&mut Vec<ReplicaState>> {
        self.replicas.get_mut(v.index()).ok_or(CoreError::UnknownPartition(v))
    }

    fn check_node(&self, n: NodeId) -> Result<()> {
        if n.index() < self.node_count {
            Ok(())
        } else {
            Err(CoreError::UnknownNode(n))
        }
    }

    /// All replicas of `v`, including tombstoned ones.
    pub fn replicas_of(&self, v: PartitionId) -> Result<&[ReplicaState]> {
        self.group(v).map(Vec::as_slice)
    }

    pub fn primary_of(&self, v: PartitionId) -> Result<NodeId> {
        self.group(v)?
            .iter()
            .find(|r| r.role == ReplicaRole::Primary)
            .map(|r| r.node)
            .ok_or(CoreError::UnknownPartition(v))
    }

    /// Live secondaries of `v`, ascending by node.
    pub fn secondaries_of(&self, v: PartitionId) -> Result<Vec<NodeId>> {
        let mut out: Vec<NodeId> = self
            .group(v)?
            .iter()
            .filter(|r| r.role == ReplicaRole::Secondary && r.is_live())
            .map(|r| r.node)
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// The live replica of `v` on `n`, if any.
    pub fn replica(&self, v: PartitionId, n: NodeId) -> Option<&ReplicaState> {
        self.replicas.get(v.index())?.iter().find(|r| r.node == n && r.is_live())
    }

    pub fn role_on(&self, v: PartitionId, n: NodeId) -> Option<ReplicaRole> {
        self.replica(v, n).map(|r| r.role)
    }

    pub fn holds_replica(&self, v: PartitionId, n: NodeId) -> bool {
        self.replica(v, n).is_some()
    }

    pub fn live_replica_count(&self, v: PartitionId) -> usize {
        self.replicas.get(v.index()).map_or(0, |g| g.iter().filter(|r| r.is_live()).count())
    }

    /// `f(v, n)`; zero when `n` holds no live replica of `v`.
    pub fn access_freq(&self, v: PartitionId, n: NodeId) -> f64 {
        self.replica(v, n).map_or(0.0, |r| r.access_freq)
    }

    /// Live replicas hosted on `n`.
    pub fn hosted_by(&self, n: NodeId) -> Vec<(PartitionId, ReplicaRole)> {
        self.replicas
            .iter()
            .flat_map(|g| g.iter())
            .filter(|r| r.node == n && r.is_live())
            .map(|r| (r.partition, r.role))
            .collect()
    }

    /// Count one access to the replica of `v` on `n` in the open interval.
    pub fn record_access(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        let replica = self
            .group_mut(v)?
            .iter_mut()
            .find(|r| r.node == n && r.is_live())
            .ok_or(CoreError::NoReplica { partition: v, node: n })?;
        replica.raw_count += 1;
        Ok(())
    }

    /// Close the sampling interval: fold raw counters into decayed heat and
    /// normalize by the hottest replica in the cluster.
    pub fn close_access_interval(&mut self) {
        let mut max_heat = 0.0f64;
        for r in self.replicas.iter_mut().flat_map(|g| g.iter_mut()) {
            r.heat = ACCESS_DECAY * r.heat + r.raw_count as f64;
            r.raw_count = 0;
            max_heat = max_heat.max(r.heat);
        }
        for r in self.replicas.iter_mut().flat_map(|g| g.iter_mut()) {
            r.access_freq = if max_heat > 0.0 { r.heat / max_heat } else { 0.0 };
        }
    }

    /// Install a new secondary of `v` on `n`. A tombstone left on `n` is
    /// replaced by the fresh copy.
    pub fn add_secondary(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        self.check_node(n)?;
        let max = self.replica_max;
        let group = self.group_mut(v)?;
        if group.iter().any(|r| r.node == n && r.is_live()) {
            return Err(CoreError::DuplicateReplica { partition: v, node: n });
        }
        if group.iter().filter(|r| r.is_live()).count() >= max {
            return Err(CoreError::ReplicaLimit { partition: v, max });
        }
        group.retain(|r| r.node != n);
        group.push(ReplicaState::new(v, n, ReplicaRole::Secondary));
        Ok(())
    }

    /// Set the delete flag on the secondary of `v` hosted by `n`.
    pub fn mark_removed(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        let group = self.group_mut(v)?;
        let replica = group
            .iter_mut()
            .find(|r| r.node == n && r.is_live())
            .ok_or(CoreError::NoReplica { partition: v, node: n })?;
        if replica.role == ReplicaRole::Primary {
            return Err(CoreError::RemovePrimary { partition: v, node: n });
        }
        replica.delete_flag = true;
        Ok(())
    }

    /// Physically drop every tombstoned replica; returns what was dropped.
    pub fn drop_tombstones(&mut self) -> Vec<(PartitionId, NodeId)> {
        let mut dropped = Vec::new();
        for group in &mut self.replicas {
            group.retain(|r| {
                if r.delete_flag {
                    dropped.push((r.partition, r.node));
                    false
                } else {
                    true
                }
            });
        }
        dropped
    }

    /// Atomic role flip: the live secondary on `target` becomes primary and
    /// the old primary becomes a secondary. A no-op when `target` already
    /// holds the primary.
    pub fn transfer_primary(&mut self, v: PartitionId, target: NodeId) -> Result<NodeId> {
        let group = self.group_mut(v)?;
        let old = group
            .iter()
            .position(|r| r.role == ReplicaRole::Primary)
            .ok_or(CoreError::UnknownPartition(v))?;
        if group[old].node == target {
            return Ok(target);
        }
        let new = group
            .iter()
            .position(|r| r.node == target && r.is_live())
            .ok_or(CoreError::NotSecondary { partition: v, node: target })?;
        group[old].role = ReplicaRole::Secondary;
        group[new].role = ReplicaRole::Primary;
        Ok(group[old].node)
    }

    pub fn set_applied_epoch(&mut self, v: PartitionId, n: NodeId, epoch: u64) {
        if let Some(group) = self.replicas.get_mut(v.index()) {
            if let Some(r) = group.iter_mut().find(|r| r.node == n && r.is_live()) {
                r.applied_epoch = r.applied_epoch.max(epoch);
            }
        }
    }

    /// Structural invariants: one primary per partition, the primary is
    /// live, no node holds two replicas of a partition.
    pub fn check_structure(&self) -> Result<()> {
        for (i, group) in self.replicas.iter().enumerate() {
            let v = PartitionId(i as u32);
            let primaries: Vec<&ReplicaState> =
                group.iter().filter(|r| r.role == ReplicaRole::Primary).collect();
            if primaries.len() != 1 {
                return Err(CoreError::Invalid(format!(
                    "{v} has {} primary replicas",
                    primaries.len()
                )));
            }
            if primaries[0].delete_flag {
                return Err(CoreError::Invalid(format!("primary of {v} is tombstoned")));
            }
            let nodes: BTreeSet<NodeId> = group.iter().map(|r| r.node).collect();
            if nodes.len() != group.len() {
                return Err(CoreError::Invalid(format!("{v} has two replicas on one node")));
            }
            if let Some(r) = group.iter().find(|r| r.node.index() >= self.node_count) {
                return Err(CoreError::UnknownNode(r.node));
            }
        }
        Ok(())
    }

    /// `k <= live replicas <= replica_max` for every partition.
    pub fn check_replica_bounds(&self) -> Result<()> {
        let min = self.replica_min.min(self.node_count);
        for v in self.partitions() {
            let live = self.live_replica_count(v);
            if live < min || live > self.replica_max {
                return Err(CoreError::Invalid(format!(
                    "{v} has {live} live replicas, expected {min}..={}",
                    self.replica_max
                )));
            }
        }
        Ok(())
    }

    /// Line format `partition,primary_node,secondary_nodes...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in self.partitions() {
            let primary = self.primary_of(v).expect("partition exists");
            out.push_str(&format!("{},{}", v.0, primary.0));
            for s in self.secondaries_of(v).expect("partition exists") {
                out.push_str(&format!(",{}", s.0));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the line format produced by [`PlacementMap::to_text`]. Blank
    /// lines and `#` comments are skipped; partitions must cover `0..m`.
    pub fn from_text(
        text: &str,
        node_count: usize,
        replica_min: usize,
        replica_max: usize,
    ) -> Result<Self> {
        let mut rows: Vec<Option<Vec<ReplicaState>>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<u32> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<u32>().map_err(|e| CoreError::Parse {
                        line: line_no,
                        msg: format!("bad field {f:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if fields.len() < 2 {
                return Err(CoreError::Parse {
                    line: line_no,
                    msg: "expected partition,primary[,secondary...]".into(),
                });
            }
            let v = PartitionId(fields[0]);
            let mut group = vec![ReplicaState::new(v, NodeId(fields[1]), ReplicaRole::Primary)];
            for &s in &fields[2..] {
                group.push(ReplicaState::new(v, NodeId(s), ReplicaRole::Secondary));
            }
            let slot = v.index();
            if rows.len() <= slot {
                rows.resize(slot + 1, None);
            }
            if rows[slot].is_some() {
                return Err(CoreError::Parse { line: line_no, msg: format!("{v} listed twice") });
            }
            rows[slot] = Some(group);
        }
        let replicas = rows
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.ok_or(CoreError::Parse {
                    line: 0,
                    msg: format!("partition {i} missing from layout"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let map = PlacementMap { node_count, replica_min, replica_max, replicas };
        map.check_structure()?;
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Op {
    pub partition: PartitionId,
    pub key: u64,
    pub kind: OpKind,
    pub payload: u64,
}

impl Op {
    pub fn read(partition: PartitionId, key: u64) -> Self {
        Op { partition, key, kind: OpKind::Read, payload: 0 }
    }

    pub fn write(partition: PartitionId, key: u64, payload: u64) -> Self {
        Op { partition, key, kind: OpKind::Write, payload }
    }
}

/// Transaction metadata as the planner and router see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnMeta {
    pub id: TxnId,
    /// Sorted, deduplicated partitions appearing in `ops`.
    pub parts: Vec<PartitionId>,
    pub ops: Vec<Op>,
    pub arrival_us: u64,
}

impl TxnMeta {
    pub fn new(id: TxnId, ops: Vec<Op>, arrival_us: u64) -> Self {
        let mut parts: Vec<PartitionId> = ops.iter().map(|o| o.partition).collect();
        parts.sort_unstable();
        parts.dedup();
        TxnMeta { id, parts, ops, arrival_us }
    }

    pub fn is_cross_partition(&self) -> bool {
        self.parts.len() > 1
    }
}

/// Non-empty batch of transactions ordered by arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct TxnBatch {
    txns: Vec<TxnMeta>,
}

impl TxnBatch {
    pub fn new(mut txns: Vec<TxnMeta>) -> Result<Self> {
        if txns.is_empty() {
            return Err(CoreError::EmptyBatch);
        }
        txns.sort_by_key(|t| t.arrival_us);
        Ok(TxnBatch { txns })
    }

    pub fn txns(&self) -> &[TxnMeta] {
        &self.txns
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }
}

/// Per-node balance factors `b_i` with the imbalance bound
/// `theta = avg * (1 + epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector {
    loads: Vec<f64>,
    epsilon: f64,
}

impl LoadVector {
    pub fn new(node_count: usize, epsilon: f64) -> Self {
        LoadVector { loads: vec![0.0; node_count], epsilon }
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn load(&self, n: NodeId) -> f64 {
        self.loads[n.index()]
    }

    pub fn add(&mut self, n: NodeId, weight: f64) {
        self.loads[n.index()] += weight;
    }

    pub fn shift(&mut self, from: NodeId, to: NodeId, weight: f64) {
        self.loads[from.index()] = (self.loads[from.index()] - weight).max(0.0);
        self.loads[to.index()] += weight;
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn avg(&self) -> f64 {
        if self.loads.is_empty() {
            0.0
        } else {
            self.loads.iter().sum::<f64>() / self.loads.len() as f64
        }
    }

    pub fn theta(&self) -> f64 {
        self.avg() * (1.0 + self.epsilon)
    }

    /// Max-load test: every `b_i <= theta`.
    pub fn is_balanced(&self) -> bool {
        let theta = self.theta();
        self.loads.iter().all(|&b| b <= theta + 1e-9)
    }

    /// Nodes above `theta`, heaviest first.
    pub fn overloaded(&self) -> Vec<NodeId> {
        let theta = self.theta();
        let mut out: Vec<NodeId> = (0..self.loads.len())
            .filter(|&i| self.loads[i] > theta + 1e-9)
            .map(|i| NodeId(i as u32))
            .collect();
        out.sort_by(|a, b| {
            self.load(*b).partial_cmp(&self.load(*a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
        });
        out
    }

    /// Nodes below the average load, ascending by node.
    pub fn idle(&self) -> Vec<NodeId> {
        let avg = self.avg();
        (0..self.loads.len())
            .filter(|&i| self.loads[i] < avg - 1e-9)
            .map(|i| NodeId(i as u32))
            .collect()
    }
}
