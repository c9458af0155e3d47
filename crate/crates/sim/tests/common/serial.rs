//! Exhaustive serial-order oracle for small committed histories.
//!
//! Reads are taken to precede the transaction's own writes, so workloads fed
//! to this checker put every read before the first write.

use std::collections::BTreeMap;

use lion_core::model::PartitionId;
use lion_sim::HistoryEntry;

pub type State = BTreeMap<(PartitionId, u64), u64>;

/// Some order of `history`, replayed from all-zero state, reproduces every
/// read and ends in `finals` (keys absent from `finals` must read 0).
pub fn serializable(history: &[HistoryEntry], finals: &State) -> bool {
    let mut used = vec![false; history.len()];
    search(history, &mut used, &State::new(), finals)
}

/// The order found, as indices into `history`.
pub fn serial_order(history: &[HistoryEntry], finals: &State) -> Option<Vec<usize>> {
    let mut used = vec![false; history.len()];
    let mut order = Vec::new();
    if find(history, &mut used, &State::new(), finals, &mut order) {
        Some(order)
    } else {
        None
    }
}

fn reads_match(t: &HistoryEntry, state: &State) -> bool {
    t.reads.iter().all(|&(v, k, val)| state.get(&(v, k)).copied().unwrap_or(0) == val)
}

fn apply(t: &HistoryEntry, state: &State) -> State {
    let mut next = state.clone();
    for &(v, k, val) in &t.writes {
        next.insert((v, k), val);
    }
    next
}

fn matches_final(state: &State, finals: &State) -> bool {
    let keys = state.keys().chain(finals.keys());
    keys.into_iter().all(|k| state.get(k).copied().unwrap_or(0) == finals.get(k).copied().unwrap_or(0))
}

fn search(h: &[HistoryEntry], used: &mut [bool], state: &State, finals: &State) -> bool {
    let mut order = Vec::new();
    find(h, used, state, finals, &mut order)
}

fn find(h: &[HistoryEntry], used: &mut [bool], state: &State, finals: &State, order: &mut Vec<usize>) -> bool {
    if order.len() == h.len() {
        return matches_final(state, finals);
    }
    for i in 0..h.len() {
        if used[i] || !reads_match(&h[i], state) {
            continue;
        }
        used[i] = true;
        order.push(i);
        if find(h, used, &apply(&h[i], state), finals, order) {
            return true;
        }
        order.pop();
        used[i] = false;
    }
    false
}
