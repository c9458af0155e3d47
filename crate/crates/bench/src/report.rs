use serde::{Deserialize, Serialize};

use lion_sim::SimStats;

use crate::config::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub generated: u64,
    pub committed: u64,
    pub aborted_final: u64,
    /// Attempt-level aborts, including retried ones.
    pub aborts: u64,
    /// `committed + aborted_final == generated`.
    pub reconciled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub mean_us: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
}

/// Average time per committed transaction in each phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub exec_us: f64,
    pub prepare_us: f64,
    pub commit_us: f64,
    pub remaster_wait_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMix {
    pub single: f64,
    pub remastered: f64,
    pub two_pc: f64,
}

impl PathMix {
    /// Transactions that ran on one node, with or without remastering.
    pub fn local(&self) -> f64 {
        self.single + self.remastered
    }
}

/// Recovery after one workload shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub at_s: u64,
    /// Median commits/s over the second half of the period.
    pub steady: f64,
    /// Seconds until throughput is back to 90% of `steady`.
    pub adaptation_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub plan_rounds: u64,
    pub plans_skipped: u64,
    pub planned_actions: u64,
    pub remasters_done: u64,
    pub remaster_conflicts: u64,
    pub adds_done: u64,
    pub removes: u64,
    pub triggers: u64,
    pub retrains: u64,
    pub batches: u64,
    pub forwards: u64,
    pub epochs_closed: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub workload: String,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub counts: Counts,
    /// Commits per second over the measured window.
    pub throughput: f64,
    /// Commits in each second of virtual time, warmup included.
    pub timeline: Vec<u64>,
    pub latency: Latency,
    pub phases: Phases,
    pub bytes_total: u64,
    pub bytes_per_txn: f64,
    pub path_mix: PathMix,
    pub shifts: Vec<Shift>,
    pub mean_adaptation_s: Option<f64>,
    pub activity: Activity,
    pub trace_hash: String,
}

impl RunReport {
    pub fn build(exp: &Experiment, stats: &SimStats, trace_hash: u64) -> Self {
        let s = stats;
        let (duration_us, warmup_us) = (exp.sim.duration_us, exp.sim.warmup_us);
        // Dynamic scenarios shift every period.
        let shift_every_us = exp.workload.is_dynamic().then_some(exp.workload.period_us);
        let measured_s = (duration_us - warmup_us) as f64 / 1e6;
        let commits = s.measured_commits;
        let per = |x: u64| if commits == 0 { 0.0 } else { x as f64 / commits as f64 };
        let mut lat = s.latencies.clone();
        lat.sort_unstable();
        let latency = Latency {
            mean_us: if lat.is_empty() { 0.0 } else { lat.iter().map(|&x| x as f64).sum::<f64>() / lat.len() as f64 },
            p50_us: percentile(&lat, 0.50),
            p95_us: percentile(&lat, 0.95),
            p99_us: percentile(&lat, 0.99),
        };
        let duration_s = duration_us / 1_000_000;
        let mut timeline = s.timeline.clone();
        timeline.resize(duration_s as usize, 0);
        let shifts: Vec<Shift> = match shift_every_us {
            Some(period) if period > 0 => {
                let period_s = (period / 1_000_000).max(1);
                (1..)
                    .map(|k| k * period_s)
                    .take_while(|&t| t < duration_s)
                    .filter_map(|t| adaptation(&timeline, t, (t + period_s).min(duration_s)))
                    .collect()
            }
            _ => Vec::new(),
        };
        let mean_adaptation_s = (!shifts.is_empty())
            .then(|| shifts.iter().map(|x| x.adaptation_s as f64).sum::<f64>() / shifts.len() as f64);
        RunReport {
            variant: exp.variant.name().to_string(),
            workload: exp.workload.signature(),
            seed: exp.seed,
            duration_s: duration_us as f64 / 1e6,
            warmup_s: warmup_us as f64 / 1e6,
            counts: Counts {
                generated: s.generated,
                committed: s.committed,
                aborted_final: s.aborted_final,
                aborts: s.aborts,
                reconciled: s.committed + s.aborted_final == s.generated,
            },
            throughput: commits as f64 / measured_s,
            timeline,
            latency,
            phases: Phases {
                exec_us: per(s.measured_exec_us),
                prepare_us: per(s.measured_prep_us),
                commit_us: per(s.measured_commit_us),
                remaster_wait_us: per(s.measured_remaster_wait_us),
            },
            bytes_total: s.measured_bytes,
            bytes_per_txn: per(s.measured_bytes),
            path_mix: PathMix {
                single: per(s.measured_by_path[0]),
                remastered: per(s.measured_by_path[1]),
                two_pc: per(s.measured_by_path[2]),
            },
            shifts,
            mean_adaptation_s,
            activity: Activity {
                plan_rounds: s.plan_rounds,
                plans_skipped: s.plans_skipped,
                planned_actions: s.planned_actions,
                remasters_done: s.remasters_done,
                remaster_conflicts: s.remaster_conflicts,
                adds_done: s.adds_done,
                removes: s.removes,
                triggers: s.triggers,
                retrains: s.retrains,
                batches: s.batches,
                forwards: s.forwards,
                epochs_closed: s.epochs_closed,
                events: s.events,
            },
            trace_hash: format!("{trace_hash:016x}"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn timeline_csv(&self) -> String {
        let mut out = String::from("second,commits\n");
        for (i, c) in self.timeline.iter().enumerate() {
            out.push_str(&format!("{i},{c}\n"));
        }
        out
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[u32], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as u64
}

/// Adaptation after a shift at second `at` whose period ends at `end`.
/// Steady state is the median of the second half of the period; adaptation
/// is the number of seconds before the first one at or above 90% of it.
pub fn adaptation(timeline: &[u64], at: u64, end: u64) -> Option<Shift> {
    let end = end.min(timeline.len() as u64);
    if end <= at + 1 {
        return None;
    }
    let mid = at + (end - at) / 2;
    let mut tail: Vec<u64> = timeline[mid as usize..end as usize].to_vec();
    tail.sort_unstable();
    let n = tail.len();
    let steady = if n % 2 == 1 { tail[n / 2] as f64 } else { (tail[n / 2 - 1] + tail[n / 2]) as f64 / 2.0 };
    // At least half the window sits at or above the median, so this finds one.
    let first = (at..end).find(|&s| timeline[s as usize] as f64 >= 0.9 * steady).unwrap_or(end);
    Some(Shift { at_s: at, steady, adaptation_s: first - at })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_use_nearest_rank() {
        let v: Vec<u32> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.5), 50);
        assert_eq!(percentile(&v, 0.95), 95);
        assert_eq!(percentile(&v, 0.99), 99);
        assert_eq!(percentile(&[7], 0.99), 7);
        assert_eq!(percentile(&[], 0.5), 0);
    }

    #[test]
    fn adaptation_counts_seconds_to_ninety_percent() {
        // Dip at 10, back to 95 at 13; steady 100.
        let mut t = vec![100u64; 30];
        t[10] = 20;
        t[11] = 50;
        t[12] = 80;
        t[13] = 95;
        let s = adaptation(&t, 10, 20).unwrap();
        assert_eq!(s.steady, 100.0);
        assert_eq!(s.adaptation_s, 3);
        // No dip at all.
        assert_eq!(adaptation(&t, 20, 30).unwrap().adaptation_s, 0);
    }

    #[test]
    fn steady_state_is_the_median_of_the_second_half() {
        let t = vec![10, 10, 10, 10, 50, 100];
        let s = adaptation(&t, 0, 6).unwrap();
        assert_eq!(s.steady, 50.0);
        assert_eq!(s.adaptation_s, 4);
        assert!(adaptation(&t, 5, 6).is_none());
    }
}
