//! Transaction routing and execution: single-node fast path, remaster then
//! execute, 2PC fallback under OCC, batch mode with remaster barriers, and
//! the planner/predictor loop that reshapes the placement while the
//! workload runs.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use lion_core::graph::HeatGraph;
use lion_core::model::{NodeId, OpKind, PartitionId, PlacementMap, ReplicaRole, TxnId, TxnMeta};
use lion_core::planner::{partition_set_cost, plan_to_actions, rearrange, ActionKind, CostParams, ReplicaAction};
use lion_core::predictor::{inject, predicted_templates, TemplateId, WorkloadPredictor};
use lion_core::workloads::TxnSource;

use crate::cluster::{Cluster, Contents, EpochShipment, RemasterStart};
use crate::config::{Protocol, SimConfig};
use crate::error::{Result, SimError};
use crate::event::{EventQueue, Micros};
use crate::trace::Trace;

const HEADER_BYTES: u64 = 64;
const OP_BYTES: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Path {
    SingleNode,
    Remastered,
    Distributed2PC,
}

impl Path {
    pub const ALL: [Path; 3] = [Path::SingleNode, Path::Remastered, Path::Distributed2PC];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Path::SingleNode => "single",
            Path::Remastered => "remastered",
            Path::Distributed2PC => "2pc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Committed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnOutcome {
    pub txn_id: TxnId,
    pub status: Status,
    pub path: Path,
    pub latency_us: Micros,
    pub exec_us: Micros,
    pub prep_us: Micros,
    pub commit_us: Micros,
    pub remaster_wait_us: Micros,
    pub bytes: u64,
}

pub const OUTCOME_CSV_HEADER: &str = "txn_id,status,path,latency_us,exec_us,prep_us,commit_us,remaster_wait_us,bytes";

impl TxnOutcome {
    pub fn csv_line(&self) -> String {
        let status = match self.status {
            Status::Committed => "committed",
            Status::Aborted => "aborted",
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.txn_id.0,
            status,
            self.path,
            self.latency_us,
            self.exec_us,
            self.prep_us,
            self.commit_us,
            self.remaster_wait_us,
            self.bytes
        )
    }
}

/// Values a committed transaction read and wrote, in op order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub txn: TxnId,
    pub reads: Vec<(PartitionId, u64, u64)>,
    pub writes: Vec<(PartitionId, u64, u64)>,
}

pub enum Workload {
    /// `clients` closed-loop clients, each submitting its next transaction
    /// as soon as the previous one finishes.
    Closed { source: Box<dyn TxnSource>, clients: usize },
    /// Fixed transactions submitted at their arrival times.
    Replay { txns: Vec<TxnMeta>, partitions: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub generated: u64,
    pub committed: u64,
    pub aborted_final: u64,
    /// Attempt-level aborts, retried or not.
    pub aborts: u64,
    pub epoch_aborts: u64,
    pub committed_by_path: [u64; 3],
    /// Commits per coordinating node.
    pub committed_by_node: Vec<u64>,
    /// Commits per second of virtual time, over the whole run.
    pub timeline: Vec<u64>,
    /// Window used for the aggregates below: `[warmup, duration)`.
    pub measured_commits: u64,
    pub measured_by_path: [u64; 3],
    pub measured_exec_us: u64,
    pub measured_prep_us: u64,
    pub measured_commit_us: u64,
    pub measured_remaster_wait_us: u64,
    pub measured_bytes: u64,
    #[serde(skip)]
    pub latencies: Vec<u32>,
    pub bytes: u64,
    pub remasters_started: u64,
    pub remasters_done: u64,
    pub remaster_joins: u64,
    pub remaster_conflicts: u64,
    pub adds_done: u64,
    pub removes: u64,
    pub action_failures: u64,
    pub plan_rounds: u64,
    pub plans_skipped: u64,
    pub planned_actions: u64,
    pub triggers: u64,
    pub retrains: u64,
    pub epochs_closed: u64,
    pub batches: u64,
    /// Queued transactions handed to another node because the placement
    /// changed before they started.
    pub forwards: u64,
    pub events: u64,
    // Invariant monitors; all stay zero in a correct run.
    pub invariant_failures: u64,
    pub unclosed_reads: u64,
    pub barrier_violations: u64,
    pub conflict_violations: u64,
    pub late_writes: u64,
}

impl SimStats {
    pub fn in_flight(&self) -> u64 {
        self.generated - self.committed - self.aborted_final
    }
}

pub struct SimResult {
    pub stats: SimStats,
    pub trace_hash: u64,
    pub trace_log: Option<String>,
    pub outcomes: Vec<TxnOutcome>,
    pub history: Vec<HistoryEntry>,
    pub placement: PlacementMap,
    /// Primary contents of every partition at the end.
    pub final_contents: Vec<Contents>,
    pub plan_log: Vec<(Micros, Vec<ReplicaAction>)>,
    pub trigger_times: Vec<Micros>,
}

/// Rank nodes by (replicas of `parts` held DESC, remaster cost ASC, id ASC)
/// and return the best.
pub fn route(parts: &[PartitionId], p: &PlacementMap, params: CostParams) -> NodeId {
    let mut best: Option<(usize, f64, NodeId)> = None;
    for n in p.nodes() {
        let count = parts.iter().filter(|&&v| p.holds_replica(v, n)).count();
        let cost = partition_set_cost(n, parts.iter(), p, params).unwrap_or(f64::INFINITY);
        let better = match best {
            None => true,
            Some((c, k, _)) => count > c || (count == c && cost < k),
        };
        if better {
            best = Some((count, cost, n));
        }
    }
    best.map_or(NodeId(0), |b| b.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Waiter {
    Txn(usize),
    Batch(usize),
    Chain(PartitionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Submit { client: usize },
    Replay { index: usize },
    ExecDone { slot: usize },
    Prepare { slot: usize },
    Decide { slot: usize, commit: bool },
    CommitApply { slot: usize },
    Done { slot: usize, committed: bool },
    Release { slot: usize },
    RemasterDone { v: PartitionId },
    AddDone { v: PartitionId, n: NodeId },
    EpochTick { epoch: u64 },
    Ship,
    BatchTick,
    PlanRound,
    Sample,
    End,
}

#[derive(Debug, Clone, Copy)]
struct Access {
    v: PartitionId,
    key: u64,
    version: u64,
    write: Option<u64>,
}

struct Txn {
    meta: TxnMeta,
    client: Option<usize>,
    submitted: Micros,
    attempt: u32,
    node: NodeId,
    remastered: bool,
    two_pc: bool,
    force_2pc: bool,
    holds_worker: bool,
    waiting: usize,
    /// Times this attempt was woken from a remaster wait.
    wakes: u32,
    wait_since: Micros,
    batch: Option<usize>,
    exec_start: Micros,
    exec_end: Micros,
    prepared_at: Micros,
    exec_us: Micros,
    prep_us: Micros,
    commit_us: Micros,
    remaster_wait_us: Micros,
    bytes: u64,
    access: Vec<Access>,
    parts: Vec<(PartitionId, u64, NodeId)>,
    epoch_conflict: bool,
    reads: Vec<(PartitionId, u64, u64)>,
    locked: bool,
}

impl Txn {
    fn reset_attempt(&mut self) {
        self.remastered = false;
        self.two_pc = false;
        self.force_2pc = false;
        self.wakes = 0;
        self.batch = None;
        self.exec_us = 0;
        self.prep_us = 0;
        self.commit_us = 0;
        self.remaster_wait_us = 0;
        self.access.clear();
        self.parts.clear();
        self.reads.clear();
        self.epoch_conflict = false;
        self.locked = false;
    }

    fn path(&self) -> Path {
        if self.two_pc {
            Path::Distributed2PC
        } else if self.remastered {
            Path::Remastered
        } else {
            Path::SingleNode
        }
    }
}

struct BatchState {
    members: Vec<usize>,
    pending: usize,
    released: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AbortKind {
    Validation,
    Epoch,
}

pub struct Simulator {
    cfg: SimConfig,
    queue: EventQueue<Ev>,
    cluster: Cluster,
    source: Option<Box<dyn TxnSource>>,
    clients: usize,
    replay: Vec<TxnMeta>,
    txns: Vec<Option<Txn>>,
    free: Vec<usize>,
    node_queues: Vec<VecDeque<usize>>,
    busy: Vec<usize>,
    waiters: BTreeMap<PartitionId, Vec<Waiter>>,
    /// Losing targets recorded against the in-flight remaster of a partition.
    conflicts: BTreeMap<PartitionId, Vec<NodeId>>,
    epoch_waiters: Vec<usize>,
    epoch_retry: Vec<usize>,
    shipments: VecDeque<EpochShipment>,
    batch_buf: Vec<usize>,
    batches: Vec<BatchState>,
    plan_batch: BTreeMap<Vec<PartitionId>, u64>,
    plan_batch_size: usize,
    chains: BTreeMap<PartitionId, VecDeque<ReplicaAction>>,
    /// Remasters of the current plan, held back until its copies are in place.
    staged: Vec<ReplicaAction>,
    predictor: Option<WorkloadPredictor>,
    rng: ChaCha8Rng,
    trace: Trace,
    stats: SimStats,
    outcomes: Vec<TxnOutcome>,
    history: Vec<HistoryEntry>,
    plan_log: Vec<(Micros, Vec<ReplicaAction>)>,
    trigger_times: Vec<Micros>,
    outcome_counter: u64,
    started: bool,
    ended: bool,
}

impl Simulator {
    pub fn new(cfg: SimConfig, workload: Workload) -> Result<Self> {
        cfg.validate()?;
        let (source, clients, replay, partitions) = match workload {
            Workload::Closed { source, clients } => {
                let m = source.partition_count();
                (Some(source), clients, Vec::new(), m)
            }
            Workload::Replay { txns, partitions } => (None, 0, txns, partitions),
        };
        let placement = PlacementMap::round_robin(cfg.nodes, partitions, cfg.replica_min, cfg.replica_max)?;
        let cluster = Cluster::new(placement, cfg.epoch_txn_cap);
        let predictor = cfg.prediction.clone().map(WorkloadPredictor::new);
        let nodes = cfg.nodes;
        let keep_log = cfg.keep_trace_log;
        let seed = cfg.seed;
        Ok(Simulator {
            cfg,
            queue: EventQueue::new(),
            cluster,
            source,
            clients,
            replay,
            txns: Vec::new(),
            free: Vec::new(),
            node_queues: vec![VecDeque::new(); nodes],
            busy: vec![0; nodes],
            waiters: BTreeMap::new(),
            conflicts: BTreeMap::new(),
            epoch_waiters: Vec::new(),
            epoch_retry: Vec::new(),
            shipments: VecDeque::new(),
            batch_buf: Vec::new(),
            batches: Vec::new(),
            plan_batch: BTreeMap::new(),
            plan_batch_size: 0,
            chains: BTreeMap::new(),
            staged: Vec::new(),
            predictor,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e55),
            trace: Trace::new(keep_log),
            stats: SimStats::default(),
            outcomes: Vec::new(),
            history: Vec::new(),
            plan_log: Vec::new(),
            trigger_times: Vec::new(),
            outcome_counter: 0,
            started: false,
            ended: false,
        })
    }

    /// Replace the initial round-robin placement. Only before the run starts.
    pub fn set_placement(&mut self, placement: PlacementMap) -> Result<()> {
        if self.started {
            return Err(SimError::Config("placement can only be replaced before the run".into()));
        }
        if placement.node_count() != self.cfg.nodes {
            return Err(SimError::Config("placement node count differs from the config".into()));
        }
        placement.check_structure()?;
        self.cluster = Cluster::new(placement, self.cfg.epoch_txn_cap);
        Ok(())
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn now(&self) -> Micros {
        self.queue.now()
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        let sample = self.sample_interval();
        let q = &mut self.queue;
        q.schedule_in(self.cfg.duration_us, Ev::End);
        q.schedule_in(self.cfg.epoch_interval_us, Ev::EpochTick { epoch: self.cluster.epoch() });
        if self.cfg.batch {
            q.schedule_in(self.cfg.batch_window_us, Ev::BatchTick);
        }
        if self.cfg.protocol == Protocol::Lion {
            q.schedule_in(sample, Ev::Sample);
        }
        if let Some(p) = &self.cfg.planner {
            q.schedule_in(p.interval_us, Ev::PlanRound);
        }
        for client in 0..self.clients {
            q.schedule_in(0, Ev::Submit { client });
        }
        for (index, t) in self.replay.iter().enumerate() {
            q.schedule(t.arrival_us, Ev::Replay { index }).expect("clock at zero");
        }
    }

    fn sample_interval(&self) -> Micros {
        self.cfg.prediction.as_ref().map_or(1_000_000, |p| p.interval_us)
    }

    /// Fire every event up to `until` (or until the run drains).
    pub fn run_until(&mut self, until: Micros) -> Result<()> {
        self.start();
        while let Some(t) = self.queue.peek_time() {
            if t > until || self.drained() {
                break;
            }
            let (now, _, ev) = self.queue.pop().expect("peeked");
            self.stats.events += 1;
            self.handle(now, ev)?;
            if self.cfg.check_invariants && self.cluster.check().is_err() {
                self.stats.invariant_failures += 1;
            }
        }
        Ok(())
    }

    fn drained(&self) -> bool {
        self.ended && self.stats.in_flight() == 0
    }

    /// Run to the end of the configured duration, drain in-flight
    /// transactions and collect the results.
    pub fn run(mut self) -> Result<SimResult> {
        self.run_until(Micros::MAX)?;
        Ok(self.into_result())
    }

    pub fn into_result(mut self) -> SimResult {
        let secs = self.cfg.duration_us.div_ceil(1_000_000) as usize;
        self.stats.timeline.resize(secs, 0);
        self.stats.retrains = self.predictor.as_ref().map_or(0, |p| p.retrain_count as u64);
        let placement = self.cluster.placement().clone();
        let final_contents = placement.partitions().map(|v| self.cluster.primary_contents(v)).collect();
        SimResult {
            stats: self.stats,
            trace_hash: self.trace.hash(),
            trace_log: self.trace.take_log(),
            outcomes: self.outcomes,
            history: self.history,
            placement,
            final_contents,
            plan_log: self.plan_log,
            trigger_times: self.trigger_times,
        }
    }

    fn rpc(&mut self) -> Micros {
        let j = self.cfg.latency.jitter_us;
        self.cfg.latency.rpc_us + if j > 0 { self.rng.gen_range(0..=j) } else { 0 }
    }

    fn txn(&self, slot: usize) -> &Txn {
        self.txns[slot].as_ref().expect("live slot")
    }

    fn txn_mut(&mut self, slot: usize) -> &mut Txn {
        self.txns[slot].as_mut().expect("live slot")
    }

    fn handle(&mut self, now: Micros, ev: Ev) -> Result<()> {
        match ev {
            Ev::Submit { client } => {
                if !self.ended {
                    let meta = self.source.as_mut().expect("closed workload").next_txn(now);
                    self.submit(now, meta, Some(client));
                }
            }
            Ev::Replay { index } => {
                if !self.ended {
                    let meta = self.replay[index].clone();
                    self.submit(now, meta, None);
                }
            }
            Ev::ExecDone { slot } => self.exec_done(now, slot),
            Ev::Prepare { slot } => self.prepare(now, slot),
            Ev::Decide { slot, commit } => self.decide(now, slot, commit),
            Ev::CommitApply { slot } => self.commit_apply(now, slot),
            Ev::Done { slot, committed } => self.done(now, slot, committed),
            Ev::Release { slot } => {
                let t = self.txn_mut(slot);
                t.commit_us = now - t.exec_end;
                self.trace.record(now, "release", Some(self.txn(slot).node.0), &[self.txn(slot).meta.id.0]);
                self.finish(now, slot, Status::Committed);
            }
            Ev::RemasterDone { v } => self.remaster_done(now, v)?,
            Ev::AddDone { v, n } => {
                match self.cluster.finish_add(v, n) {
                    Ok(()) => self.stats.adds_done += 1,
                    Err(_) => self.stats.action_failures += 1,
                }
                self.trace.record(now, "add_done", Some(n.0), &[v.0 as u64]);
                self.step_chain(now, v);
            }
            Ev::EpochTick { epoch } => {
                if epoch == self.cluster.epoch() {
                    self.close_epoch(now);
                }
            }
            Ev::Ship => {
                let ship = self.shipments.pop_front().expect("shipment queued");
                self.cluster.apply_shipment(&ship);
                self.trace.record(now, "ship", None, &[ship.epoch, ship.writes.len() as u64]);
            }
            Ev::BatchTick => {
                self.close_batch(now);
                if !self.drained() {
                    self.queue.schedule_in(self.cfg.batch_window_us, Ev::BatchTick);
                }
            }
            Ev::PlanRound => {
                if !self.ended {
                    self.plan_round(now, None)?;
                    let iv = self.cfg.planner.as_ref().expect("planner on").interval_us;
                    self.queue.schedule_in(iv, Ev::PlanRound);
                }
            }
            Ev::Sample => {
                if !self.ended {
                    self.sample(now)?;
                    let iv = self.sample_interval();
                    self.queue.schedule_in(iv, Ev::Sample);
                }
            }
            Ev::End => {
                self.ended = true;
                self.trace.record(now, "end", None, &[self.stats.generated]);
            }
        }
        Ok(())
    }

    // ---- submission and routing ----

    fn submit(&mut self, now: Micros, meta: TxnMeta, client: Option<usize>) {
        self.stats.generated += 1;
        if self.cfg.planner.is_some() {
            *self.plan_batch.entry(meta.parts.clone()).or_insert(0) += 1;
            self.plan_batch_size += 1;
        }
        if let Some(p) = &mut self.predictor {
            p.observe(&meta);
        }
        self.trace.record(now, "submit", None, &[meta.id.0]);
        let txn = Txn {
            meta,
            client,
            submitted: now,
            attempt: 0,
            node: NodeId(0),
            remastered: false,
            two_pc: false,
            force_2pc: false,
            holds_worker: false,
            waiting: 0,
            wakes: 0,
            wait_since: 0,
            batch: None,
            exec_start: 0,
            exec_end: 0,
            prepared_at: 0,
            exec_us: 0,
            prep_us: 0,
            commit_us: 0,
            remaster_wait_us: 0,
            bytes: 0,
            access: Vec::new(),
            parts: Vec::new(),
            epoch_conflict: false,
            reads: Vec::new(),
            locked: false,
        };
        let slot = match self.free.pop() {
            Some(s) => {
                self.txns[s] = Some(txn);
                s
            }
            None => {
                self.txns.push(Some(txn));
                self.txns.len() - 1
            }
        };
        self.dispatch(now, slot);
    }

    fn route_txn(&self, meta: &TxnMeta) -> NodeId {
        let p = self.cluster.placement();
        match self.cfg.protocol {
            Protocol::TwoPhaseCommit => p.primary_of(meta.ops[0].partition).expect("known partition"),
            Protocol::Lion => {
                let params = self.cfg.planner.as_ref().map(|s| s.cost).unwrap_or_default();
                route(&meta.parts, p, params)
            }
        }
    }

    fn dispatch(&mut self, now: Micros, slot: usize) {
        if self.cfg.batch {
            self.batch_buf.push(slot);
            if self.batch_buf.len() >= self.cfg.batch_cap {
                self.close_batch(now);
            }
        } else {
            let node = self.route_txn(&self.txn(slot).meta);
            self.txn_mut(slot).node = node;
            self.enqueue(now, slot);
        }
    }

    fn enqueue(&mut self, now: Micros, slot: usize) {
        let n = self.txn(slot).node.index();
        self.node_queues[n].push_back(slot);
        self.pump(now, n);
    }

    fn pump(&mut self, now: Micros, n: usize) {
        while self.busy[n] < self.cfg.workers {
            let Some(slot) = self.node_queues[n].pop_front() else { break };
            self.busy[n] += 1;
            self.txn_mut(slot).holds_worker = true;
            self.begin(now, slot);
        }
    }

    fn release_worker(&mut self, now: Micros, slot: usize) {
        let t = self.txn_mut(slot);
        if t.holds_worker {
            t.holds_worker = false;
            let n = t.node.index();
            self.busy[n] -= 1;
            self.pump(now, n);
        }
    }

    fn wait_on(&mut self, now: Micros, slot: usize, v: PartitionId) {
        let t = self.txn_mut(slot);
        if t.waiting == 0 {
            t.wait_since = now;
        }
        t.waiting += 1;
        self.waiters.entry(v).or_default().push(Waiter::Txn(slot));
    }

    // ---- execution ----

    /// Decide how the transaction runs on its node; may park it on remaster
    /// latches, in which case it re-enters here once they clear.
    fn begin(&mut self, now: Micros, slot: usize) {
        if self.txn(slot).two_pc || self.txn(slot).force_2pc {
            self.txn_mut(slot).two_pc = true;
            return self.start_2pc(now, slot);
        }
        let node = self.txn(slot).node;
        let parts = self.txn(slot).meta.parts.clone();
        if self.cfg.protocol == Protocol::TwoPhaseCommit {
            let p = self.cluster.placement();
            if parts.iter().all(|&v| p.primary_of(v).ok() == Some(node)) {
                return self.start_local(now, slot);
            }
            self.txn_mut(slot).two_pc = true;
            return self.start_2pc(now, slot);
        }
        if self.txn(slot).wakes == 0 {
            // The placement may have moved while the transaction sat in the
            // node's queue; hand it over instead of pulling primaries back.
            let best = self.route_txn(&self.txn(slot).meta);
            if best != node {
                self.stats.forwards += 1;
                self.release_worker(now, slot);
                self.txn_mut(slot).node = best;
                return self.enqueue(now, slot);
            }
        }
        if parts.iter().any(|&v| !self.cluster.placement().holds_replica(v, node)) {
            self.txn_mut(slot).two_pc = true;
            return self.start_2pc(now, slot);
        }
        let mut waits = Vec::new();
        for &v in &parts {
            match self.cluster.placement().role_on(v, node) {
                Some(ReplicaRole::Secondary) => {
                    if self.txn(slot).wakes > 0 && self.cluster.latch(v).is_none() {
                        // Another remaster took the partition away while this
                        // one waited; pulling it back could repeat forever.
                        self.txn_mut(slot).two_pc = true;
                        return self.start_2pc(now, slot);
                    }
                    let delay = self.cfg.latency.remaster_delay_us;
                    match self.cluster.begin_remaster(v, node, now, delay) {
                        Ok(RemasterStart::Started { done_at }) => {
                            self.stats.remasters_started += 1;
                            self.queue.schedule(done_at, Ev::RemasterDone { v }).expect("future");
                            self.trace.record(now, "remaster", Some(node.0), &[v.0 as u64, self.txn(slot).meta.id.0]);
                            let t = self.txn_mut(slot);
                            t.remastered = true;
                            t.bytes += 2 * HEADER_BYTES;
                            waits.push(v);
                        }
                        Ok(RemasterStart::Joined { .. }) => {
                            self.stats.remaster_joins += 1;
                            self.txn_mut(slot).remastered = true;
                            waits.push(v);
                        }
                        Ok(RemasterStart::AlreadyPrimary) => {}
                        Ok(RemasterStart::Conflict) | Err(_) => {
                            self.note_conflict(v, node);
                            self.txn_mut(slot).two_pc = true;
                            // Remasters already started keep going; the 2PC
                            // attempt waits for any latch on its partitions.
                            return self.start_2pc(now, slot);
                        }
                    }
                }
                Some(ReplicaRole::Primary) => {
                    if self.cluster.latch(v).is_some() {
                        waits.push(v);
                    }
                }
                None => unreachable!("replica presence checked above"),
            }
        }
        if waits.is_empty() {
            self.start_local(now, slot);
        } else {
            for v in waits {
                self.wait_on(now, slot, v);
            }
        }
    }

    fn note_conflict(&mut self, v: PartitionId, loser: NodeId) {
        self.stats.remaster_conflicts += 1;
        self.conflicts.entry(v).or_default().push(loser);
    }

    /// Snapshot reads at execution start; reads of unclosed epoch writes
    /// doom the attempt.
    fn capture(&mut self, slot: usize) {
        let record = self.cfg.record_history;
        let t = self.txns[slot].as_mut().expect("live slot");
        let cluster = &self.cluster;
        t.access.clear();
        t.reads.clear();
        t.epoch_conflict = false;
        for op in &t.meta.ops {
            let idx = match t.access.iter().position(|a| a.v == op.partition && a.key == op.key) {
                Some(i) => i,
                None => {
                    let c = cluster.cell(op.partition, op.key);
                    if cluster.is_unclosed(&c) {
                        t.epoch_conflict = true;
                    }
                    t.access.push(Access { v: op.partition, key: op.key, version: c.version, write: None });
                    t.access.len() - 1
                }
            };
            match op.kind {
                OpKind::Write => t.access[idx].write = Some(op.payload),
                OpKind::Read => {
                    if record {
                        let value = t.access[idx].write.unwrap_or_else(|| cluster.cell(op.partition, op.key).value);
                        t.reads.push((op.partition, op.key, value));
                    }
                }
            }
        }
        t.parts = t
            .meta
            .parts
            .iter()
            .map(|&v| (v, cluster.generation(v), cluster.placement().primary_of(v).expect("known partition")))
            .collect();
    }

    fn note_barrier(&mut self, slot: usize) {
        if let Some(b) = self.txn(slot).batch {
            if !self.batches[b].released {
                self.stats.barrier_violations += 1;
            }
        }
    }

    fn start_local(&mut self, now: Micros, slot: usize) {
        self.note_barrier(slot);
        self.capture(slot);
        let ops = self.txn(slot).meta.ops.len() as u64;
        let t = self.txn_mut(slot);
        t.exec_start = now;
        let node = t.node.0;
        let id = t.meta.id.0;
        self.trace.record(now, "exec", Some(node), &[id, 0]);
        self.queue.schedule_in(ops * self.cfg.op_us, Ev::ExecDone { slot });
    }

    fn start_2pc(&mut self, now: Micros, slot: usize) {
        let latched: Vec<PartitionId> =
            self.txn(slot).meta.parts.iter().copied().filter(|&v| self.cluster.latch(v).is_some()).collect();
        if !latched.is_empty() {
            for v in latched {
                self.wait_on(now, slot, v);
            }
            return;
        }
        self.note_barrier(slot);
        self.capture(slot);
        let node = self.txn(slot).node;
        let remote: Vec<NodeId> = {
            let mut r: Vec<NodeId> = self.txn(slot).parts.iter().map(|p| p.2).filter(|&n| n != node).collect();
            r.sort_unstable();
            r.dedup();
            r
        };
        let ops = self.txn(slot).meta.ops.len() as u64;
        let mut delay = ops * self.cfg.op_us;
        if !remote.is_empty() {
            delay += 2 * self.rpc();
        }
        let remote_ops =
            self.txn(slot).meta.ops.iter().filter(|o| self.txn(slot).parts.iter().any(|p| p.0 == o.partition && p.2 != node)).count()
                as u64;
        let t = self.txn_mut(slot);
        t.exec_start = now;
        t.bytes += remote.len() as u64 * 2 * HEADER_BYTES + remote_ops * OP_BYTES;
        let id = t.meta.id.0;
        self.trace.record(now, "exec", Some(node.0), &[id, 1]);
        self.queue.schedule_in(delay, Ev::ExecDone { slot });
    }

    fn validate_local(&self, slot: usize) -> bool {
        let t = self.txn(slot);
        let id = t.meta.id.0;
        !t.epoch_conflict
            && t.parts.iter().all(|&(v, gen, _)| {
                self.cluster.generation(v) == gen && self.cluster.placement().primary_of(v).ok() == Some(t.node)
            })
            && t.access.iter().all(|a| self.cluster.validate(a.v, a.key, a.version, id))
    }

    fn validate_2pc(&self, slot: usize) -> bool {
        let t = self.txn(slot);
        let id = t.meta.id.0;
        !t.epoch_conflict
            && t.parts.iter().all(|&(v, gen, primary)| {
                self.cluster.generation(v) == gen && self.cluster.placement().primary_of(v).ok() == Some(primary)
            })
            && t.access.iter().all(|a| self.cluster.validate(a.v, a.key, a.version, id))
    }

    fn secondary_fanout(&self, slot: usize) -> u64 {
        let p = self.cluster.placement();
        self.txn(slot)
            .access
            .iter()
            .filter(|a| a.write.is_some())
            .map(|a| p.secondaries_of(a.v).map_or(0, |s| s.len() as u64))
            .sum()
    }

    fn apply_writes(&mut self, now: Micros, slot: usize, epoch_mode: bool) {
        let t = self.txns[slot].as_ref().expect("live slot");
        let mut writes = Vec::new();
        for a in &t.access {
            if let Some(value) = a.write {
                if let Some(l) = self.cluster.latch(a.v) {
                    if t.prepared_at > l.started_at || !t.two_pc {
                        self.stats.late_writes += 1;
                    }
                }
                writes.push((a.v, a.key, value));
            }
        }
        for &(v, key, value) in &writes {
            self.cluster.write(v, key, value, epoch_mode);
        }
        for op in &t.meta.ops {
            if let Ok(primary) = self.cluster.placement().primary_of(op.partition) {
                let _ = self.cluster.placement_mut().record_access(op.partition, primary);
            }
        }
        if self.cfg.record_history {
            let t = self.txns[slot].as_ref().expect("live slot");
            let mut ordered = Vec::new();
            for op in t.meta.ops.iter().filter(|o| o.kind == OpKind::Write) {
                ordered.push((op.partition, op.key, op.payload));
            }
            self.history.push(HistoryEntry { txn: t.meta.id, reads: t.reads.clone(), writes: ordered });
        }
        let _ = now;
    }

    fn exec_done(&mut self, now: Micros, slot: usize) {
        let t = self.txn_mut(slot);
        t.exec_end = now;
        t.exec_us = now - t.exec_start;
        if t.two_pc {
            let d = self.rpc();
            self.queue.schedule_in(d, Ev::Prepare { slot });
            return;
        }
        let node = self.txn(slot).node.0;
        let id = self.txn(slot).meta.id.0;
        if !self.validate_local(slot) {
            let kind = if self.txn(slot).epoch_conflict { AbortKind::Epoch } else { AbortKind::Validation };
            self.trace.record(now, "abort", Some(node), &[id]);
            self.release_worker(now, slot);
            return self.abort(now, slot, kind);
        }
        let fanout = self.secondary_fanout(slot);
        match self.cfg.protocol {
            Protocol::Lion => {
                self.apply_writes(now, slot, true);
                self.txn_mut(slot).bytes += fanout * OP_BYTES + HEADER_BYTES;
                self.trace.record(now, "commit", Some(node), &[id, self.cluster.epoch()]);
                self.epoch_waiters.push(slot);
                self.release_worker(now, slot);
                if self.cluster.note_epoch_commit() {
                    self.close_epoch(now);
                }
            }
            Protocol::TwoPhaseCommit => {
                // Synchronous replication before the client hears back.
                self.apply_writes(now, slot, false);
                self.txn_mut(slot).bytes += fanout * OP_BYTES + 2 * HEADER_BYTES;
                self.trace.record(now, "commit", Some(node), &[id, 0]);
                let d = 2 * self.rpc();
                self.txn_mut(slot).commit_us = d;
                self.queue.schedule_in(d, Ev::Done { slot, committed: true });
            }
        }
    }

    fn participants(&self, slot: usize) -> (u64, u64) {
        let t = self.txn(slot);
        let mut nodes: Vec<NodeId> = t.parts.iter().map(|p| p.2).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let p = self.cluster.placement();
        let secondaries: u64 = t.parts.iter().map(|&(v, _, _)| p.secondaries_of(v).map_or(0, |s| s.len() as u64)).sum();
        (nodes.len() as u64, secondaries)
    }

    fn prepare(&mut self, now: Micros, slot: usize) {
        let id = self.txn(slot).meta.id.0;
        let node = self.txn(slot).node.0;
        let (parts, secs) = self.participants(slot);
        let writes = self.txn(slot).access.iter().filter(|a| a.write.is_some()).count() as u64;
        let ok = self.validate_2pc(slot);
        if ok {
            let keys: Vec<(PartitionId, u64)> =
                self.txn(slot).access.iter().filter(|a| a.write.is_some()).map(|a| (a.v, a.key)).collect();
            for (v, key) in keys {
                self.cluster.lock(v, key, id);
            }
            let t = self.txn_mut(slot);
            t.locked = true;
            t.prepared_at = now;
            t.bytes += parts * 2 * HEADER_BYTES + secs * 2 * HEADER_BYTES + writes * secs.min(1) * OP_BYTES * 2;
            self.trace.record(now, "prepare", Some(node), &[id, 1]);
            // Prepare record to the secondaries and back, then the vote.
            let d = 3 * self.rpc();
            self.queue.schedule_in(d, Ev::Decide { slot, commit: true });
        } else {
            self.txn_mut(slot).bytes += parts * 2 * HEADER_BYTES;
            self.trace.record(now, "prepare", Some(node), &[id, 0]);
            let d = self.rpc();
            self.queue.schedule_in(d, Ev::Decide { slot, commit: false });
        }
    }

    fn unlock_all(&mut self, slot: usize) {
        let id = self.txn(slot).meta.id.0;
        if !self.txn(slot).locked {
            return;
        }
        let keys: Vec<(PartitionId, u64)> =
            self.txn(slot).access.iter().filter(|a| a.write.is_some()).map(|a| (a.v, a.key)).collect();
        for (v, key) in keys {
            self.cluster.unlock(v, key, id);
        }
        self.txn_mut(slot).locked = false;
    }

    fn decide(&mut self, now: Micros, slot: usize, commit: bool) {
        let t = self.txn_mut(slot);
        t.prep_us = now - t.exec_end;
        let node = t.node.0;
        let id = t.meta.id.0;
        self.trace.record(now, "decide", Some(node), &[id, commit as u64]);
        let d = self.rpc();
        if commit {
            self.queue.schedule_in(d, Ev::CommitApply { slot });
        } else {
            self.unlock_all(slot);
            self.queue.schedule_in(d, Ev::Done { slot, committed: false });
        }
    }

    fn commit_apply(&mut self, now: Micros, slot: usize) {
        self.unlock_all(slot);
        self.apply_writes(now, slot, false);
        let (parts, secs) = self.participants(slot);
        self.txn_mut(slot).bytes += parts * 2 * HEADER_BYTES + secs * 2 * HEADER_BYTES;
        let node = self.txn(slot).node.0;
        self.trace.record(now, "apply", Some(node), &[self.txn(slot).meta.id.0]);
        // Commit record to the secondaries and back, then the ack.
        let d = 3 * self.rpc();
        self.queue.schedule_in(d, Ev::Done { slot, committed: true });
    }

    fn done(&mut self, now: Micros, slot: usize, committed: bool) {
        let t = self.txn_mut(slot);
        if t.two_pc {
            t.commit_us = now - t.exec_end - t.prep_us;
        }
        self.release_worker(now, slot);
        if committed {
            self.finish(now, slot, Status::Committed);
        } else {
            self.abort(now, slot, AbortKind::Validation);
        }
    }

    fn abort(&mut self, now: Micros, slot: usize, kind: AbortKind) {
        self.stats.aborts += 1;
        if kind == AbortKind::Epoch {
            self.stats.epoch_aborts += 1;
        }
        if self.txn(slot).attempt >= self.cfg.max_retries {
            return self.finish(now, slot, Status::Aborted);
        }
        let t = self.txn_mut(slot);
        t.attempt += 1;
        t.reset_attempt();
        match kind {
            AbortKind::Epoch => self.epoch_retry.push(slot),
            AbortKind::Validation => self.dispatch(now, slot),
        }
    }

    fn finish(&mut self, now: Micros, slot: usize, status: Status) {
        let t = self.txns[slot].take().expect("live slot");
        self.free.push(slot);
        let outcome = TxnOutcome {
            txn_id: t.meta.id,
            status,
            path: t.path(),
            latency_us: now - t.submitted,
            exec_us: t.exec_us,
            prep_us: t.prep_us,
            commit_us: t.commit_us,
            remaster_wait_us: t.remaster_wait_us,
            bytes: t.bytes,
        };
        self.trace.record(now, "done", Some(t.node.0), &[t.meta.id.0, status as u64, outcome.path as u64]);
        match status {
            Status::Committed => {
                self.stats.committed += 1;
                self.stats.committed_by_path[outcome.path.index()] += 1;
                let n = t.node.index();
                if self.stats.committed_by_node.len() <= n {
                    self.stats.committed_by_node.resize(n + 1, 0);
                }
                self.stats.committed_by_node[n] += 1;
                self.stats.bytes += outcome.bytes;
                if t.epoch_conflict {
                    self.stats.unclosed_reads += 1;
                }
                let sec = (now / 1_000_000) as usize;
                if now < self.cfg.duration_us {
                    if self.stats.timeline.len() <= sec {
                        self.stats.timeline.resize(sec + 1, 0);
                    }
                    self.stats.timeline[sec] += 1;
                    if now >= self.cfg.warmup_us {
                        let s = &mut self.stats;
                        s.measured_commits += 1;
                        s.measured_by_path[outcome.path.index()] += 1;
                        s.measured_exec_us += outcome.exec_us;
                        s.measured_prep_us += outcome.prep_us;
                        s.measured_commit_us += outcome.commit_us;
                        s.measured_remaster_wait_us += outcome.remaster_wait_us;
                        s.measured_bytes += outcome.bytes;
                        s.latencies.push(outcome.latency_us.min(u32::MAX as u64) as u32);
                    }
                }
            }
            Status::Aborted => self.stats.aborted_final += 1,
        }
        if self.cfg.outcome_every > 0 {
            if self.outcome_counter % self.cfg.outcome_every == 0 {
                self.outcomes.push(outcome);
            }
            self.outcome_counter += 1;
        }
        if let Some(client) = t.client {
            if !self.ended {
                self.queue.schedule_in(0, Ev::Submit { client });
            }
        }
    }

    // ---- epochs ----

    fn close_epoch(&mut self, now: Micros) {
        let ship = self.cluster.close_epoch(now);
        self.stats.epochs_closed += 1;
        self.trace.record(now, "epoch", None, &[ship.epoch, ship.writes.len() as u64]);
        self.shipments.push_back(ship);
        let rpc = self.cfg.latency.rpc_us;
        self.queue.schedule_in(rpc, Ev::Ship);
        for slot in std::mem::take(&mut self.epoch_waiters) {
            self.queue.schedule_in(rpc, Ev::Release { slot });
        }
        for slot in std::mem::take(&mut self.epoch_retry) {
            self.dispatch(now, slot);
        }
        if !self.drained() {
            self.queue.schedule_in(self.cfg.epoch_interval_us, Ev::EpochTick { epoch: self.cluster.epoch() });
        }
    }

    // ---- remaster completion ----

    fn remaster_done(&mut self, now: Micros, v: PartitionId) -> Result<()> {
        let target = self.cluster.latch(v).expect("latched").target;
        let (old, new) = self.cluster.finish_remaster(v)?;
        self.stats.remasters_done += 1;
        self.trace.record(now, "remaster_done", Some(new.0), &[v.0 as u64, old.0 as u64]);
        let primary = self.cluster.placement().primary_of(v)?;
        for loser in self.conflicts.remove(&v).unwrap_or_default() {
            if primary != target || (loser != target && primary == loser) {
                self.stats.conflict_violations += 1;
            }
        }
        for w in self.waiters.remove(&v).unwrap_or_default() {
            match w {
                Waiter::Txn(slot) => {
                    let t = self.txn_mut(slot);
                    t.waiting -= 1;
                    if t.waiting == 0 {
                        t.wakes += 1;
                        t.remaster_wait_us += now - t.wait_since;
                        if t.two_pc {
                            self.start_2pc(now, slot);
                        } else {
                            self.begin(now, slot);
                        }
                    }
                }
                Waiter::Batch(b) => {
                    self.batches[b].pending -= 1;
                    if self.batches[b].pending == 0 {
                        self.release_batch(now, b);
                    }
                }
                Waiter::Chain(p) => self.step_chain(now, p),
            }
        }
        Ok(())
    }

    // ---- batch mode ----

    fn close_batch(&mut self, now: Micros) {
        if self.batch_buf.is_empty() {
            return;
        }
        let members = std::mem::take(&mut self.batch_buf);
        let b = self.batches.len();
        self.batches.push(BatchState { members: members.clone(), pending: 0, released: false });
        self.stats.batches += 1;
        let delay = self.cfg.latency.remaster_delay_us;
        for &slot in &members {
            let node = self.route_txn(&self.txn(slot).meta);
            let t = self.txn_mut(slot);
            t.node = node;
            t.batch = Some(b);
            t.wait_since = now;
            if self.cfg.protocol != Protocol::Lion {
                continue;
            }
            let parts = self.txn(slot).meta.parts.clone();
            let p = self.cluster.placement();
            if parts.iter().any(|&v| !p.holds_replica(v, node)) {
                self.txn_mut(slot).force_2pc = true;
                continue;
            }
            for v in parts {
                match self.cluster.placement().role_on(v, node) {
                    Some(ReplicaRole::Secondary) => match self.cluster.begin_remaster(v, node, now, delay) {
                        Ok(RemasterStart::Started { done_at }) => {
                            self.stats.remasters_started += 1;
                            self.queue.schedule(done_at, Ev::RemasterDone { v }).expect("future");
                            self.trace.record(now, "remaster", Some(node.0), &[v.0 as u64, self.txn(slot).meta.id.0]);
                            self.batches[b].pending += 1;
                            self.waiters.entry(v).or_default().push(Waiter::Batch(b));
                            let t = self.txn_mut(slot);
                            t.remastered = true;
                            t.bytes += 2 * HEADER_BYTES;
                        }
                        Ok(RemasterStart::Joined { .. }) => {
                            self.stats.remaster_joins += 1;
                            self.batches[b].pending += 1;
                            self.waiters.entry(v).or_default().push(Waiter::Batch(b));
                            self.txn_mut(slot).remastered = true;
                        }
                        Ok(RemasterStart::AlreadyPrimary) => {}
                        Ok(RemasterStart::Conflict) | Err(_) => {
                            self.note_conflict(v, node);
                            self.txn_mut(slot).force_2pc = true;
                        }
                    },
                    Some(ReplicaRole::Primary) => {
                        if self.cluster.latch(v).is_some_and(|l| l.target != node) {
                            self.txn_mut(slot).force_2pc = true;
                        }
                    }
                    None => {}
                }
            }
        }
        self.trace.record(now, "batch", None, &[b as u64, members.len() as u64, self.batches[b].pending as u64]);
        if self.batches[b].pending == 0 {
            self.release_batch(now, b);
        }
    }

    fn release_batch(&mut self, now: Micros, b: usize) {
        self.batches[b].released = true;
        self.trace.record(now, "barrier", None, &[b as u64]);
        for slot in std::mem::take(&mut self.batches[b].members) {
            let t = self.txn_mut(slot);
            t.remaster_wait_us += now - t.wait_since;
            if t.force_2pc {
                t.remastered = false;
            }
            self.enqueue(now, slot);
        }
    }

    // ---- planner and predictor ----

    fn sample(&mut self, now: Micros) -> Result<()> {
        self.cluster.placement_mut().close_access_interval();
        let Some(pred) = &mut self.predictor else { return Ok(()) };
        pred.close_interval()?;
        if let Some(trigger) = pred.evaluate()? {
            let k = pred.draw_count(self.plan_batch_size.max(1));
            let preds = predicted_templates(&trigger.class, k, &mut self.rng);
            self.stats.triggers += 1;
            self.trigger_times.push(now);
            self.trace.record(now, "trigger", None, &[(trigger.wv * 1e6) as u64, k as u64]);
            self.plan_round(now, Some(preds))?;
        }
        Ok(())
    }

    fn plan_round(&mut self, now: Micros, preds: Option<Vec<(TemplateId, f64)>>) -> Result<()> {
        let Some(ps) = self.cfg.planner.clone() else { return Ok(()) };
        if self.plan_in_progress() {
            self.stats.plans_skipped += 1;
            return Ok(());
        }
        let mut g = HeatGraph::new(self.cluster.placement(), ps.cross_weight);
        for (parts, &count) in &self.plan_batch {
            g.add_access(parts, count as f64);
        }
        if let Some(preds) = &preds {
            let w_p = self.cfg.prediction.as_ref().map_or(1.0, |p| p.w_p);
            inject(&mut g, preds, w_p);
        } else {
            self.plan_batch.clear();
            self.plan_batch_size = 0;
        }
        if g.vertex_count() == 0 {
            return Ok(());
        }
        let clumps = g.generate_clumps(ps.alpha);
        let rp = rearrange(&clumps, self.cluster.placement(), ps.cost, ps.epsilon, ps.step_limit)?;
        let actions = plan_to_actions(&rp, self.cluster.placement())?;
        self.stats.plan_rounds += 1;
        self.stats.planned_actions += actions.len() as u64;
        self.trace.record(now, "plan", None, &[clumps.len() as u64, actions.len() as u64]);
        self.apply_plan_at(now, actions);
        Ok(())
    }

    /// Hand replica actions to the adaptor. Removals and copies run first,
    /// partitions concurrently and removals before additions within one
    /// partition; the plan's remasters start together once every copy has
    /// landed, so routing never sees half of a clump moved.
    pub fn apply_plan(&mut self, actions: Vec<ReplicaAction>) {
        self.start();
        let now = self.queue.now();
        self.apply_plan_at(now, actions);
    }

    fn apply_plan_at(&mut self, now: Micros, actions: Vec<ReplicaAction>) {
        let rank = |k: ActionKind| match k {
            ActionKind::RemoveReplica => 0,
            ActionKind::AddReplica => 1,
            ActionKind::Migrate => 2,
            ActionKind::Remaster => 3,
        };
        if !actions.is_empty() {
            self.plan_log.push((now, actions.clone()));
        }
        let mut ordered: Vec<(usize, ReplicaAction)> = actions.into_iter().enumerate().collect();
        ordered.sort_by_key(|(i, a)| (a.partition, rank(a.kind), *i));
        let mut fresh = Vec::new();
        for (_, a) in ordered {
            match a.kind {
                ActionKind::Remaster => self.staged.push(a),
                ActionKind::Migrate => {
                    self.staged.push(ReplicaAction::new(ActionKind::Remaster, a.partition, a.node));
                    if !self.cluster.placement().holds_replica(a.partition, a.node) {
                        self.push_chain(a.partition, ReplicaAction::new(ActionKind::AddReplica, a.partition, a.node), &mut fresh);
                    }
                }
                _ => self.push_chain(a.partition, a, &mut fresh),
            }
        }
        if self.chains.is_empty() {
            self.launch_staged(now);
        }
        for v in fresh {
            self.step_chain(now, v);
        }
    }

    fn push_chain(&mut self, v: PartitionId, a: ReplicaAction, fresh: &mut Vec<PartitionId>) {
        let chain = self.chains.entry(v).or_default();
        if chain.is_empty() && !fresh.contains(&v) {
            fresh.push(v);
        }
        chain.push_back(a);
    }

    fn launch_staged(&mut self, now: Micros) {
        let staged = std::mem::take(&mut self.staged);
        let mut fresh = Vec::new();
        for a in staged {
            self.push_chain(a.partition, a, &mut fresh);
        }
        for v in fresh {
            self.step_chain(now, v);
        }
    }

    fn step_chain(&mut self, now: Micros, v: PartitionId) {
        loop {
            let Some(a) = self.chains.get_mut(&v).and_then(|c| c.pop_front()) else {
                self.chains.remove(&v);
                if self.chains.is_empty() && !self.staged.is_empty() {
                    self.launch_staged(now);
                }
                return;
            };
            let n = a.node;
            match a.kind {
                ActionKind::RemoveReplica => match self.cluster.remove(v, n) {
                    Ok(()) => {
                        self.stats.removes += 1;
                        self.trace.record(now, "remove", Some(n.0), &[v.0 as u64]);
                    }
                    Err(_) => self.stats.action_failures += 1,
                },
                ActionKind::AddReplica | ActionKind::Migrate => match self.cluster.begin_add(v, n) {
                    Ok(()) => {
                        let l = &self.cfg.latency;
                        let d = l.migrate_base_us + l.migrate_per_item_us * self.cfg.items_per_partition;
                        self.queue.schedule_in(d, Ev::AddDone { v, n });
                        self.trace.record(now, "add", Some(n.0), &[v.0 as u64]);
                        return;
                    }
                    Err(_) => self.stats.action_failures += 1,
                },
                ActionKind::Remaster => {
                    let delay = self.cfg.latency.remaster_delay_us;
                    match self.cluster.begin_remaster(v, n, now, delay) {
                        Ok(RemasterStart::AlreadyPrimary) => {}
                        Ok(RemasterStart::Started { done_at }) => {
                            self.stats.remasters_started += 1;
                            self.queue.schedule(done_at, Ev::RemasterDone { v }).expect("future");
                            self.trace.record(now, "remaster", Some(n.0), &[v.0 as u64, u64::MAX]);
                            self.waiters.entry(v).or_default().push(Waiter::Chain(v));
                            return;
                        }
                        Ok(RemasterStart::Joined { .. }) => {
                            self.waiters.entry(v).or_default().push(Waiter::Chain(v));
                            return;
                        }
                        Ok(RemasterStart::Conflict) => {
                            // Retry once the other remaster lets go.
                            self.chains.get_mut(&v).expect("chain").push_front(a);
                            self.waiters.entry(v).or_default().push(Waiter::Chain(v));
                            return;
                        }
                        Err(_) => self.stats.action_failures += 1,
                    }
                }
            }
        }
    }

    pub fn plan_in_progress(&self) -> bool {
        !self.chains.is_empty() || !self.staged.is_empty()
    }
}
