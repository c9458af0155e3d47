//! Weighted co-access graph over partitions and its clustering into clumps.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{NodeId, PartitionId, PlacementMap, TxnBatch};

pub const DEFAULT_CROSS_WEIGHT: f64 = 10.0;
pub const DEFAULT_ALPHA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Endpoints' primaries live on different nodes.
    Cross,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub weight: f64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatGraph {
    vertices: BTreeMap<PartitionId, f64>,
    edges: BTreeMap<(PartitionId, PartitionId), Edge>,
    primaries: BTreeMap<PartitionId, NodeId>,
    cross_weight: f64,
}

fn key(a: PartitionId, b: PartitionId) -> (PartitionId, PartitionId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl HeatGraph {
    /// Empty graph whose edge kinds are judged against `placement` as it is
    /// now.
    pub fn new(placement: &PlacementMap, cross_weight: f64) -> Self {
        let primaries = placement
            .partitions()
            .map(|v| (v, placement.primary_of(v).expect("partition exists")))
            .collect();
        HeatGraph {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            primaries,
            cross_weight: cross_weight.max(1.0),
        }
    }

    pub fn build(batch: &TxnBatch, placement: &PlacementMap, cross_weight: f64) -> Self {
        let mut g = HeatGraph::new(placement, cross_weight);
        for t in batch.txns() {
            g.add_access(&t.parts, 1.0);
        }
        g
    }

    pub fn cross_weight(&self) -> f64 {
        self.cross_weight
    }

    pub fn kind_of(&self, a: PartitionId, b: PartitionId) -> EdgeKind {
        match (self.primaries.get(&a), self.primaries.get(&b)) {
            (Some(x), Some(y)) if x == y => EdgeKind::Same,
            _ => EdgeKind::Cross,
        }
    }

    fn edge_increment(&self, a: PartitionId, b: PartitionId) -> f64 {
        match self.kind_of(a, b) {
            EdgeKind::Cross => self.cross_weight,
            EdgeKind::Same => 1.0,
        }
    }

    /// Count `times` co-accesses of `parts` (sorted and deduplicated).
    pub fn add_access(&mut self, parts: &[PartitionId], times: f64) {
        if times <= 0.0 {
            return;
        }
        for &v in parts {
            *self.vertices.entry(v).or_insert(0.0) += times;
        }
        self.add_pair_edges(parts, times);
    }

    fn add_pair_edges(&mut self, parts: &[PartitionId], times: f64) {
        for (i, &a) in parts.iter().enumerate() {
            for &b in &parts[i + 1..] {
                if a == b {
                    continue;
                }
                let inc = self.edge_increment(a, b) * times;
                let kind = self.kind_of(a, b);
                self.edges.entry(key(a, b)).or_insert(Edge { weight: 0.0, kind }).weight += inc;
            }
        }
    }

    /// Add co-access edges for `parts` without touching vertex weights.
    /// Vertices missing from the graph are created with weight zero.
    pub fn add_edges_only(&mut self, parts: &[PartitionId], times: f64) {
        if times <= 0.0 || parts.len() < 2 {
            return;
        }
        for &v in parts {
            self.vertices.entry(v).or_insert(0.0);
        }
        self.add_pair_edges(parts, times);
    }

    pub fn vertex_weight(&self, v: PartitionId) -> Option<f64> {
        self.vertices.get(&v).copied()
    }

    pub fn edge(&self, a: PartitionId, b: PartitionId) -> Option<Edge> {
        self.edges.get(&key(a, b)).copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = (PartitionId, f64)> + '_ {
        self.vertices.iter().map(|(v, w)| (*v, *w))
    }

    pub fn edges(&self) -> impl Iterator<Item = (PartitionId, PartitionId, Edge)> + '_ {
        self.edges.iter().map(|((a, b), e)| (*a, *b, *e))
    }

    /// Vertices hottest first, ties by ascending id.
    pub fn hot_order(&self) -> Vec<PartitionId> {
        let mut order: Vec<(PartitionId, f64)> = self.vertices().collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.into_iter().map(|(v, _)| v).collect()
    }

    fn adjacency(&self) -> BTreeMap<PartitionId, Vec<(PartitionId, f64)>> {
        let mut adj: BTreeMap<PartitionId, Vec<(PartitionId, f64)>> = BTreeMap::new();
        for (&(a, b), e) in &self.edges {
            adj.entry(a).or_default().push((b, e.weight));
            adj.entry(b).or_default().push((a, e.weight));
        }
        for list in adj.values_mut() {
            list.sort_by_key(|(v, _)| *v);
        }
        adj
    }

    /// Seeded breadth-first expansion: seeds in hot order, a neighbor joins
    /// iff the connecting edge weighs more than `alpha`. A vertex belongs to
    /// the first clump that reaches it.
    pub fn generate_clumps(&self, alpha: f64) -> Vec<Clump> {
        let adj = self.adjacency();
        let mut visited = BTreeSet::new();
        let mut clumps = Vec::new();
        for seed in self.hot_order() {
            if !visited.insert(seed) {
                continue;
            }
            let mut pids = BTreeSet::from([seed]);
            let mut weight = self.vertices[&seed];
            let mut frontier = VecDeque::from([seed]);
            while let Some(u) = frontier.pop_front() {
                for &(nb, w) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                    if w > alpha && visited.insert(nb) {
                        pids.insert(nb);
                        weight += self.vertices[&nb];
                        frontier.push_back(nb);
                    }
                }
            }
            clumps.push(Clump { id: clumps.len(), pids, weight, dest: None });
        }
        clumps
    }

    /// Edge list, one `u v weight kind` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (a, b, e) in self.edges() {
            let kind = match e.kind {
                EdgeKind::Cross => "cross",
                EdgeKind::Same => "same",
            };
            let _ = writeln!(out, "{} {} {} {}", a.0, b.0, e.weight, kind);
        }
        out
    }
}

/// Partitions to be co-located on one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clump {
    pub id: usize,
    pub pids: BTreeSet<PartitionId>,
    pub weight: f64,
    pub dest: Option<NodeId>,
}

impl Clump {
    pub fn new(id: usize, pids: impl IntoIterator<Item = PartitionId>, weight: f64) -> Self {
        Clump { id, pids: pids.into_iter().collect(), weight, dest: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Op, TxnId, TxnMeta};

    fn txn(id: u64, parts: &[u32]) -> TxnMeta {
        TxnMeta::new(TxnId(id), parts.iter().map(|&p| Op::read(PartitionId(p), 0)).collect(), id)
    }

    fn batch(txns: Vec<TxnMeta>) -> TxnBatch {
        TxnBatch::new(txns).unwrap()
    }

    #[test]
    fn colocated_pair_weights() {
        let p = PlacementMap::from_text("0,0\n1,0\n2,0\n", 2, 1, 4).unwrap();
        let g = HeatGraph::build(&batch(vec![txn(0, &[1, 2]), txn(1, &[1, 2])]), &p, 10.0);
        assert_eq!(g.vertex_weight(PartitionId(1)), Some(2.0));
        assert_eq!(g.vertex_weight(PartitionId(2)), Some(2.0));
        let e = g.edge(PartitionId(1), PartitionId(2)).unwrap();
        assert_eq!((e.weight, e.kind), (2.0, EdgeKind::Same));
    }

    #[test]
    fn single_partition_txn() {
        let p = PlacementMap::round_robin(2, 3, 1, 4).unwrap();
        let g = HeatGraph::build(&batch(vec![txn(0, &[1])]), &p, 10.0);
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn cross_edge_weight() {
        let p = PlacementMap::round_robin(2, 5, 1, 4).unwrap();
        let g = HeatGraph::build(&batch(vec![txn(0, &[3, 4])]), &p, 10.0);
        let e = g.edge(PartitionId(3), PartitionId(4)).unwrap();
        assert_eq!((e.weight, e.kind), (10.0, EdgeKind::Cross));
        assert_eq!(g.dump(), "3 4 10 cross\n");
    }

    #[test]
    fn chain_threshold() {
        let p = PlacementMap::round_robin(1, 4, 1, 4).unwrap();
        let mut g = HeatGraph::new(&p, 10.0);
        g.add_access(&[PartitionId(1), PartitionId(2)], 6.0);
        g.add_access(&[PartitionId(2), PartitionId(3)], 4.0);
        let clumps = g.generate_clumps(5.0);
        let sets: Vec<Vec<u32>> = clumps.iter().map(|c| c.pids.iter().map(|p| p.0).collect()).collect();
        assert_eq!(sets, vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let p = PlacementMap::round_robin(2, 6, 1, 4).unwrap();
        let txns = (0..6).map(|i| txn(i, &[i as u32])).collect();
        let g = HeatGraph::build(&batch(txns), &p, 10.0);
        let clumps = g.generate_clumps(5.0);
        assert_eq!(clumps.len(), 6);
        assert!(clumps.iter().all(|c| c.pids.len() == 1 && c.weight == 1.0));
    }
}
