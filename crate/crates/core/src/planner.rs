//! Clump-to-node assignment: cost model, dispatching, load fine-tuning and
//! the translation of a plan into replica actions.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::Clump;
use crate::model::{LoadVector, NodeId, PartitionId, PlacementMap, ReplicaRole};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_STEP_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub w_r: f64,
    pub w_m: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { w_r: 1.0, w_m: 10.0 }
    }
}

impl CostParams {
    pub fn new(w_r: f64, w_m: f64) -> Result<Self> {
        if !(w_r > 0.0 && w_r < w_m) {
            return Err(CoreError::Invalid(format!("need 0 < w_r < w_m, got {w_r} and {w_m}")));
        }
        Ok(CostParams { w_r, w_m })
    }
}

/// Remaster counter of one partition on `n`; zero unless `n` holds a live
/// secondary.
pub fn remaster_count(v: PartitionId, n: NodeId, p: &PlacementMap) -> Result<f64> {
    let primary = p.primary_of(v)?;
    Ok(match p.role_on(v, n) {
        Some(ReplicaRole::Secondary) => 1.0 + (p.access_freq(v, primary) + 1.0).log2(),
        _ => 0.0,
    })
}

/// Migration counter of one partition on `n`.
pub fn migrate_count(v: PartitionId, n: NodeId, p: &PlacementMap) -> Result<f64> {
    p.primary_of(v)?;
    Ok(if p.holds_replica(v, n) { 0.0 } else { 1.0 })
}

/// Cost of making `n` the primary home of a set of partitions.
pub fn partition_set_cost<'a>(
    n: NodeId,
    pids: impl IntoIterator<Item = &'a PartitionId>,
    p: &PlacementMap,
    params: CostParams,
) -> Result<f64> {
    let mut remaster = 0.0;
    let mut migrate = 0.0;
    for &v in pids {
        remaster += remaster_count(v, n, p)?;
        migrate += migrate_count(v, n, p)?;
    }
    Ok(params.w_r * remaster + params.w_m * migrate)
}

pub fn placement_cost(n: NodeId, c: &Clump, p: &PlacementMap, params: CostParams) -> Result<f64> {
    partition_set_cost(n, c.pids.iter(), p, params)
}

/// Cached per-(clump, node) costs against the pre-plan placement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostMatrix {
    rows: BTreeMap<usize, Vec<f64>>,
}

impl CostMatrix {
    pub fn new() -> Self {
        CostMatrix::default()
    }

    pub fn get(&self, clump: usize, n: NodeId) -> Option<f64> {
        self.rows.get(&clump).and_then(|r| r.get(n.index()).copied())
    }

    pub fn row(&self, clump: usize) -> Option<&[f64]> {
        self.rows.get(&clump).map(Vec::as_slice)
    }

    fn fill(&mut self, c: &Clump, p: &PlacementMap, params: CostParams) -> Result<&[f64]> {
        if !self.rows.contains_key(&c.id) {
            let row = p.nodes().map(|n| placement_cost(n, c, p, params)).collect::<Result<Vec<_>>>()?;
            self.rows.insert(c.id, row);
        }
        Ok(&self.rows[&c.id])
    }
}

/// Lowest-cost node for `c`; ties go to the lowest node id.
pub fn find_dst_node(c: &Clump, p: &PlacementMap, m_c: &mut CostMatrix, params: CostParams) -> Result<NodeId> {
    let row = m_c.fill(c, p, params)?;
    let mut best = 0;
    for (i, &cost) in row.iter().enumerate() {
        if cost < row[best] {
            best = i;
        }
    }
    Ok(NodeId(best as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub clump: Clump,
    pub dest: NodeId,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconfigurationPlan {
    pub entries: Vec<PlanEntry>,
    pub total_cost: f64,
}

impl ReconfigurationPlan {
    /// Node loads implied by the plan.
    pub fn loads(&self, node_count: usize, epsilon: f64) -> LoadVector {
        let mut b = LoadVector::new(node_count, epsilon);
        for e in &self.entries {
            b.add(e.dest, e.clump.weight);
        }
        b
    }

    /// Line format `clump_id,dest_node,cost`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.clump.id, e.dest.0, e.cost);
        }
        out
    }
}

/// Dispatch every clump to its cheapest node, then shift clumps from
/// overloaded to idle nodes until the max-load test passes or no move
/// qualifies.
pub fn rearrange(
    clumps: &[Clump],
    p: &PlacementMap,
    params: CostParams,
    epsilon: f64,
    step_limit: usize,
) -> Result<ReconfigurationPlan> {
    let node_count = p.node_count();
    let mut m_c = CostMatrix::new();
    let mut dest = Vec::with_capacity(clumps.len());
    let mut b = LoadVector::new(node_count, epsilon);
    for c in clumps {
        let n = find_dst_node(c, p, &mut m_c, params)?;
        dest.push(n);
        b.add(n, c.weight);
    }

    let step_limit = step_limit.max(1);
    // Each move strictly lowers the sum of squared loads, so this bound only
    // guards against float noise.
    let mut budget = clumps.len() * node_count * 64 + 64;
    let mut is_done = false;
    while !b.is_balanced() && !is_done && budget > 0 {
        let mut step = step_limit;
        let (mut over, mut idle) = (b.overloaded(), b.idle());
        if over.is_empty() || idle.is_empty() {
            break;
        }
        while !b.is_balanced() && step > 0 && budget > 0 {
            budget -= 1;
            let Some((idx, target)) = pick_clump(clumps, &dest, &over, &idle, &m_c, &b) else {
                break;
            };
            b.shift(dest[idx], target, clumps[idx].weight);
            dest[idx] = target;
            over = b.overloaded();
            idle = b.idle();
            if over.is_empty() || idle.is_empty() {
                step = 0;
            } else {
                step -= 1;
            }
        }
        if step == step_limit {
            is_done = true;
        }
    }

    let mut entries = Vec::with_capacity(clumps.len());
    let mut total_cost = 0.0;
    for (c, &n) in clumps.iter().zip(&dest) {
        let cost = m_c.get(c.id, n).expect("row filled during dispatch");
        total_cost += cost;
        let mut clump = c.clone();
        clump.dest = Some(n);
        entries.push(PlanEntry { clump, dest: n, cost });
    }
    Ok(ReconfigurationPlan { entries, total_cost })
}

/// Overloaded nodes heaviest first; within a node, smallest clump first. The
/// first clump fitting under the node's excess over theta moves to the
/// cheapest idle node.
fn pick_clump(
    clumps: &[Clump],
    dest: &[NodeId],
    over: &[NodeId],
    idle: &[NodeId],
    m_c: &CostMatrix,
    b: &LoadVector,
) -> Option<(usize, NodeId)> {
    let theta = b.theta();
    for &o in over {
        let gap = b.load(o) - theta;
        let mut queue: Vec<usize> = (0..clumps.len()).filter(|&i| dest[i] == o).collect();
        queue.sort_by(|&x, &y| clumps[x].weight.total_cmp(&clumps[y].weight).then(x.cmp(&y)));
        for idx in queue {
            if clumps[idx].weight > gap + 1e-12 {
                break;
            }
            if clumps[idx].weight <= 0.0 {
                continue;
            }
            let target = idle
                .iter()
                .copied()
                .min_by(|&x, &y| {
                    let cx = m_c.get(clumps[idx].id, x).unwrap_or(f64::INFINITY);
                    let cy = m_c.get(clumps[idx].id, y).unwrap_or(f64::INFINITY);
                    cx.total_cmp(&cy).then(x.cmp(&y))
                })?;
            return Some((idx, target));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    AddReplica,
    Remaster,
    Migrate,
    RemoveReplica,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ActionKind::AddReplica => "add",
            ActionKind::Remaster => "remaster",
            ActionKind::Migrate => "migrate",
            ActionKind::RemoveReplica => "remove",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaAction {
    pub kind: ActionKind,
    pub partition: PartitionId,
    pub node: NodeId,
}

impl ReplicaAction {
    pub fn new(kind: ActionKind, partition: PartitionId, node: NodeId) -> Self {
        ReplicaAction { kind, partition, node }
    }
}

impl fmt::Display for ReplicaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ACTION {} {} {}", self.kind, self.partition.0, self.node.0)
    }
}

pub fn actions_to_text(actions: &[ReplicaAction]) -> String {
    actions.iter().map(|a| format!("{a}\n")).collect()
}

/// Realize a plan as replica operations against `p`. A partition that would
/// exceed the replica cap also sheds its coldest secondary (never the one
/// about to become primary).
pub fn plan_to_actions(rp: &ReconfigurationPlan, p: &PlacementMap) -> Result<Vec<ReplicaAction>> {
    let mut out = Vec::new();
    for e in &rp.entries {
        for &v in &e.clump.pids {
            let n = e.dest;
            match p.role_on(v, n) {
                Some(ReplicaRole::Primary) => {}
                Some(ReplicaRole::Secondary) => out.push(ReplicaAction::new(ActionKind::Remaster, v, n)),
                None => {
                    p.primary_of(v)?;
                    out.push(ReplicaAction::new(ActionKind::AddReplica, v, n));
                    out.push(ReplicaAction::new(ActionKind::Remaster, v, n));
                    if p.live_replica_count(v) + 1 > p.replica_max() {
                        if let Some(cold) = coldest_secondary(v, p)? {
                            out.push(ReplicaAction::new(ActionKind::RemoveReplica, v, cold));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Apply actions directly to a placement, bypassing any timing. Within a
/// partition removals go first so an add at the cap does not bounce.
pub fn apply_actions(p: &mut PlacementMap, actions: &[ReplicaAction]) -> Result<()> {
    let rank = |k: ActionKind| match k {
        ActionKind::RemoveReplica => 0,
        ActionKind::AddReplica => 1,
        ActionKind::Migrate => 2,
        ActionKind::Remaster => 3,
    };
    let mut ordered: Vec<(usize, &ReplicaAction)> = actions.iter().enumerate().collect();
    ordered.sort_by_key(|(i, a)| (a.partition, rank(a.kind), *i));
    for (_, a) in ordered {
        match a.kind {
            ActionKind::RemoveReplica => p.mark_removed(a.partition, a.node)?,
            ActionKind::AddReplica => p.add_secondary(a.partition, a.node)?,
            ActionKind::Remaster => {
                p.transfer_primary(a.partition, a.node)?;
            }
            ActionKind::Migrate => {
                if !p.holds_replica(a.partition, a.node) {
                    p.add_secondary(a.partition, a.node)?;
                }
                p.transfer_primary(a.partition, a.node)?;
            }
        }
    }
    p.drop_tombstones();
    Ok(())
}

/// Live secondary of `v` with the lowest access frequency, lowest node on
/// ties.
pub fn coldest_secondary(v: PartitionId, p: &PlacementMap) -> Result<Option<NodeId>> {
    Ok(p.secondaries_of(v)?
        .into_iter()
        .min_by(|&x, &y| p.access_freq(v, x).total_cmp(&p.access_freq(v, y)).then(x.cmp(&y))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colocated_clump_costs_nothing() {
        let p = PlacementMap::round_robin(3, 6, 2, 4).unwrap();
        let c = Clump::new(0, [PartitionId(0), PartitionId(3)], 2.0);
        assert_eq!(placement_cost(NodeId(0), &c, &p, CostParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn cold_secondary_costs_one_remaster() {
        let p = PlacementMap::round_robin(3, 3, 2, 4).unwrap();
        let c = Clump::new(0, [PartitionId(0)], 1.0);
        assert_eq!(placement_cost(NodeId(1), &c, &p, CostParams::default()).unwrap(), 1.0);
        assert_eq!(placement_cost(NodeId(2), &c, &p, CostParams::default()).unwrap(), 10.0);
    }

    #[test]
    fn single_node_plan() {
        let p = PlacementMap::round_robin(1, 2, 1, 4).unwrap();
        let c = Clump::new(0, [PartitionId(0), PartitionId(1)], 3.0);
        let mut m = CostMatrix::new();
        assert_eq!(find_dst_node(&c, &p, &mut m, CostParams::default()).unwrap(), NodeId(0));
        let rp = rearrange(&[c], &p, CostParams::default(), 0.1, 5).unwrap();
        assert_eq!(rp.entries[0].dest, NodeId(0));
        assert_eq!(rp.total_cost, 0.0);
        assert!(plan_to_actions(&rp, &p).unwrap().is_empty());
    }

    #[test]
    fn invalid_cost_params() {
        assert!(CostParams::new(10.0, 1.0).is_err());
        assert!(CostParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn action_text() {
        let a = ReplicaAction::new(ActionKind::AddReplica, PartitionId(3), NodeId(2));
        assert_eq!(a.to_string(), "ACTION add 3 2");
    }
}
