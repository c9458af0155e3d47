//! Replica state machines, per-partition data, remaster latches and
//! epoch-based group commit.

use std::collections::{BTreeMap, BTreeSet};

use lion_core::model::{NodeId, PartitionId, PlacementMap, ReplicaRole};

use crate::error::{Result, SimError};
use crate::event::Micros;

/// One key of a partition as held by its primary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cell {
    pub value: u64,
    pub version: u64,
    /// Epoch of the last epoch-committed write; 0 when the write was
    /// replicated synchronously.
    pub write_epoch: u64,
    /// Value as of the last closed epoch.
    pub closed_value: u64,
    /// Holder of the 2PC write lock.
    pub lock: Option<u64>,
}

pub type Store = BTreeMap<u64, Cell>;

/// Replica contents as plain `key -> value`.
pub type Contents = BTreeMap<u64, u64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Latch {
    pub target: NodeId,
    pub started_at: Micros,
    pub done_at: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemasterStart {
    AlreadyPrimary,
    Started { done_at: Micros },
    /// A remaster to the same target is already in flight.
    Joined { done_at: Micros },
    Conflict,
}

/// Writes of one closed epoch on their way to the secondaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochShipment {
    pub epoch: u64,
    pub writes: Vec<(PartitionId, u64, u64)>,
}

pub struct Cluster {
    placement: PlacementMap,
    stores: Vec<Store>,
    copies: BTreeMap<(PartitionId, NodeId), Contents>,
    /// Bumped whenever a partition's primary is blocked or flips.
    gens: Vec<u64>,
    latches: Vec<Option<Latch>>,
    adding: BTreeSet<(PartitionId, NodeId)>,
    epoch: u64,
    epoch_opened_at: Micros,
    epoch_txns: usize,
    epoch_writes: Vec<(PartitionId, u64, u64)>,
    pub epoch_txn_cap: usize,
}

impl Cluster {
    pub fn new(placement: PlacementMap, epoch_txn_cap: usize) -> Self {
        let m = placement.partition_count();
        let mut copies = BTreeMap::new();
        for v in placement.partitions() {
            for n in placement.secondaries_of(v).expect("known partition") {
                copies.insert((v, n), Contents::new());
            }
        }
        Cluster {
            placement,
            stores: vec![Store::new(); m],
            copies,
            gens: vec![0; m],
            latches: vec![None; m],
            adding: BTreeSet::new(),
            epoch: 1,
            epoch_opened_at: 0,
            epoch_txns: 0,
            epoch_writes: Vec::new(),
            epoch_txn_cap: epoch_txn_cap.max(1),
        }
    }

    pub fn placement(&self) -> &PlacementMap {
        &self.placement
    }

    pub fn placement_mut(&mut self) -> &mut PlacementMap {
        &mut self.placement
    }

    // ---- data ----

    pub fn cell(&self, v: PartitionId, key: u64) -> Cell {
        self.stores[v.index()].get(&key).copied().unwrap_or_default()
    }

    /// True when the key carries a write of the still-open epoch.
    pub fn is_unclosed(&self, cell: &Cell) -> bool {
        cell.write_epoch >= self.epoch
    }

    pub fn generation(&self, v: PartitionId) -> u64 {
        self.gens[v.index()]
    }

    /// OCC check for one accessed key.
    pub fn validate(&self, v: PartitionId, key: u64, version: u64, me: u64) -> bool {
        let c = self.cell(v, key);
        c.version == version && c.lock.is_none_or(|h| h == me) && !self.is_unclosed(&c)
    }

    pub fn lock(&mut self, v: PartitionId, key: u64, me: u64) {
        self.stores[v.index()].entry(key).or_default().lock = Some(me);
    }

    pub fn unlock(&mut self, v: PartitionId, key: u64, me: u64) {
        if let Some(c) = self.stores[v.index()].get_mut(&key) {
            if c.lock == Some(me) {
                c.lock = None;
            }
        }
    }

    /// Install a committed write. Epoch writes stay unclosed until the epoch
    /// closes; synchronous writes are closed and pushed to every live
    /// secondary at once.
    pub fn write(&mut self, v: PartitionId, key: u64, value: u64, epoch_mode: bool) {
        let epoch = self.epoch;
        let c = self.stores[v.index()].entry(key).or_default();
        if c.write_epoch < epoch {
            c.closed_value = c.value;
        }
        c.value = value;
        c.version += 1;
        if epoch_mode {
            c.write_epoch = epoch;
            self.epoch_writes.push((v, key, value));
        } else {
            c.write_epoch = 0;
            c.closed_value = value;
            for n in self.placement.secondaries_of(v).expect("known partition") {
                self.copies.entry((v, n)).or_default().insert(key, value);
            }
        }
    }

    fn closed_contents(&self, v: PartitionId) -> Contents {
        self.stores[v.index()]
            .iter()
            .map(|(&k, c)| (k, if self.is_unclosed(c) { c.closed_value } else { c.value }))
            .collect()
    }

    /// Full contents of the primary, including writes of the open epoch.
    pub fn primary_contents(&self, v: PartitionId) -> Contents {
        self.stores[v.index()].iter().map(|(&k, c)| (k, c.value)).collect()
    }

    /// What a read served by the replica of `v` on `n` returns; primaries
    /// serve closed state only.
    pub fn read_replica(&self, v: PartitionId, n: NodeId, key: u64) -> Option<u64> {
        match self.placement.role_on(v, n)? {
            ReplicaRole::Primary => {
                let c = self.cell(v, key);
                Some(if self.is_unclosed(&c) { c.closed_value } else { c.value })
            }
            ReplicaRole::Secondary => {
                Some(self.copies.get(&(v, n)).and_then(|m| m.get(&key)).copied().unwrap_or(0))
            }
        }
    }

    pub fn replica_contents(&self, v: PartitionId, n: NodeId) -> Option<Contents> {
        match self.placement.role_on(v, n)? {
            ReplicaRole::Primary => Some(self.primary_contents(v)),
            ReplicaRole::Secondary => Some(self.copies.get(&(v, n)).cloned().unwrap_or_default()),
        }
    }

    // ---- remaster ----

    pub fn latch(&self, v: PartitionId) -> Option<&Latch> {
        self.latches[v.index()].as_ref()
    }

    /// Take the remaster latch and block new operations on `v`.
    pub fn begin_remaster(&mut self, v: PartitionId, target: NodeId, now: Micros, delay: Micros) -> Result<RemasterStart> {
        if let Some(l) = &self.latches[v.index()] {
            return Ok(if l.target == target {
                RemasterStart::Joined { done_at: l.done_at }
            } else {
                RemasterStart::Conflict
            });
        }
        match self.placement.role_on(v, target) {
            Some(ReplicaRole::Primary) => Ok(RemasterStart::AlreadyPrimary),
            Some(ReplicaRole::Secondary) => {
                let done_at = now + delay;
                self.latches[v.index()] = Some(Latch { target, started_at: now, done_at });
                self.gens[v.index()] += 1;
                Ok(RemasterStart::Started { done_at })
            }
            None => Err(SimError::RemasterTarget { partition: v, node: target }),
        }
    }

    /// Log sync and role flip; returns `(old primary, new primary)`.
    pub fn finish_remaster(&mut self, v: PartitionId) -> Result<(NodeId, NodeId)> {
        let latch = self.latches[v.index()].take().expect("remaster in flight");
        let synced = self.primary_contents(v);
        let old = self.placement.transfer_primary(v, latch.target)?;
        self.copies.remove(&(v, latch.target));
        if old != latch.target {
            // The demoted primary keeps the full state as its secondary copy.
            self.copies.insert((v, old), synced);
            let e = self.epoch - 1;
            self.placement.set_applied_epoch(v, latch.target, e);
            self.placement.set_applied_epoch(v, old, e);
        }
        self.gens[v.index()] += 1;
        Ok((old, latch.target))
    }

    // ---- add / remove ----

    /// Reserve a new secondary of `v` on `n`; the copy lands after the
    /// migration delay.
    pub fn begin_add(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        let reject = |reason: &str| SimError::AddRejected { partition: v, node: n, reason: reason.into() };
        if n.index() >= self.placement.node_count() {
            return Err(reject("unknown node"));
        }
        if self.placement.holds_replica(v, n) || self.adding.contains(&(v, n)) {
            return Err(reject("duplicate replica"));
        }
        let pending = self.adding.iter().filter(|(p, _)| *p == v).count();
        if self.placement.live_replica_count(v) + pending >= self.placement.replica_max() {
            return Err(reject("replica_max reached"));
        }
        self.adding.insert((v, n));
        Ok(())
    }

    pub fn finish_add(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        self.adding.remove(&(v, n));
        self.placement.add_secondary(v, n)?;
        self.copies.insert((v, n), self.closed_contents(v));
        self.placement.set_applied_epoch(v, n, self.epoch - 1);
        Ok(())
    }

    pub fn is_adding(&self, v: PartitionId, n: NodeId) -> bool {
        self.adding.contains(&(v, n))
    }

    /// Tombstone the secondary of `v` on `n`; it is dropped at the next
    /// epoch boundary.
    pub fn remove(&mut self, v: PartitionId, n: NodeId) -> Result<()> {
        if self.latch(v).is_some_and(|l| l.target == n) {
            return Err(SimError::RemasterConflict(v));
        }
        self.placement.mark_removed(v, n)?;
        Ok(())
    }

    // ---- epochs ----

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn epoch_opened_at(&self) -> Micros {
        self.epoch_opened_at
    }

    pub fn epoch_txns(&self) -> usize {
        self.epoch_txns
    }

    /// Count one committed transaction; true when the epoch hit its cap.
    pub fn note_epoch_commit(&mut self) -> bool {
        self.epoch_txns += 1;
        self.epoch_txns >= self.epoch_txn_cap
    }

    /// Close the open epoch: its writes become visible and ship to the
    /// secondaries; tombstoned replicas are dropped.
    pub fn close_epoch(&mut self, now: Micros) -> EpochShipment {
        let ship = EpochShipment { epoch: self.epoch, writes: std::mem::take(&mut self.epoch_writes) };
        self.epoch += 1;
        self.epoch_opened_at = now;
        self.epoch_txns = 0;
        for (v, n) in self.placement.drop_tombstones() {
            self.copies.remove(&(v, n));
        }
        ship
    }

    /// Apply a shipped epoch at every live secondary.
    pub fn apply_shipment(&mut self, ship: &EpochShipment) {
        for &(v, key, value) in &ship.writes {
            for n in self.placement.secondaries_of(v).expect("known partition") {
                self.copies.entry((v, n)).or_default().insert(key, value);
            }
        }
        let parts: BTreeSet<PartitionId> = ship.writes.iter().map(|w| w.0).collect();
        for v in self.placement.partitions().collect::<Vec<_>>() {
            for n in self.placement.secondaries_of(v).expect("known partition") {
                if parts.contains(&v) || self.placement.replica(v, n).is_some_and(|r| r.applied_epoch < ship.epoch) {
                    self.placement.set_applied_epoch(v, n, ship.epoch);
                }
            }
        }
    }

    /// Structural checks plus "no two nodes think they are primary".
    pub fn check(&self) -> Result<()> {
        self.placement.check_structure()?;
        Ok(())
    }
}
