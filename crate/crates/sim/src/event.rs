//! Virtual clock and a deterministic event queue ordered by `(time, seq)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Result, SimError};

/// Virtual time in microseconds.
pub type Micros = u64;

struct Entry<E> {
    at: Micros,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    now: Micros,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), now: 0, next_seq: 0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule `event` at absolute time `at`; returns its sequence number.
    pub fn schedule(&mut self, at: Micros, event: E) -> Result<u64> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { at, seq, event });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: Micros, event: E) -> u64 {
        let at = self.now + delay;
        self.schedule(at, event).expect("relative schedule is never in the past")
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|e| e.at)
    }

    /// Pop the next event and advance the clock to it.
    pub fn pop(&mut self) -> Option<(Micros, u64, E)> {
        let e = self.heap.pop()?;
        self.now = e.at;
        Some((e.at, e.seq, e.event))
    }

    /// Fire every event with time `<= until`, then park the clock at `until`.
    pub fn run_until(&mut self, until: Micros, mut handle: impl FnMut(&mut Self, Micros, E)) -> usize {
        let mut fired = 0;
        while self.peek_time().is_some_and(|t| t <= until) {
            let (at, _, ev) = self.pop().expect("peeked");
            handle(self, at, ev);
            fired += 1;
        }
        self.now = self.now.max(until);
        fired
    }
}
