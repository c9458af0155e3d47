//! Event trace: a running hash over every fired event plus an optional
//! text log of `time kind node detail` records.

use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;

#[derive(Default)]
pub struct Trace {
    hasher: FnvHasher,
    events: u64,
    log: Option<String>,
}

impl Trace {
    pub fn new(keep_log: bool) -> Self {
        Trace { hasher: FnvHasher::default(), events: 0, log: keep_log.then(String::new) }
    }

    /// Fold one event into the hash. `detail` values are printed space
    /// separated in the log.
    pub fn record(&mut self, time: u64, kind: &str, node: Option<u32>, detail: &[u64]) {
        self.events += 1;
        self.hasher.write_u64(time);
        self.hasher.write(kind.as_bytes());
        self.hasher.write_u32(node.unwrap_or(u32::MAX));
        for &d in detail {
            self.hasher.write_u64(d);
        }
        if let Some(log) = &mut self.log {
            let _ = write!(log, "{time} {kind} ");
            match node {
                Some(n) => {
                    let _ = write!(log, "N{n}");
                }
                None => log.push('-'),
            }
            for d in detail {
                let _ = write!(log, " {d}");
            }
            log.push('\n');
        }
    }

    pub fn hash(&self) -> u64 {
        self.hasher.finish()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn log(&self) -> Option<&str> {
        self.log.as_deref()
    }

    pub fn take_log(&mut self) -> Option<String> {
        self.log.take()
    }
}
