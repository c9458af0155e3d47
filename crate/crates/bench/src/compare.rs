use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::report::RunReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: String,
    pub seed: u64,
    pub throughput: f64,
    pub throughput_ratio: Option<f64>,
    pub p50_us: u64,
    pub p50_ratio: Option<f64>,
    pub p99_us: u64,
    pub p99_ratio: Option<f64>,
    pub bytes_per_txn: f64,
    pub bytes_ratio: Option<f64>,
    pub single: f64,
    pub remastered: f64,
    pub two_pc: f64,
    pub mean_adaptation_s: Option<f64>,
    /// The workload differs from the first report's.
    pub workload_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_workload: String,
    pub workloads_match: bool,
    pub rows: Vec<CompareRow>,
}

/// `a / b`; equal zeros compare as 1, anything else over zero has no ratio.
fn ratio(a: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        (a == 0.0).then_some(1.0)
    } else {
        Some(a / b)
    }
}

/// Side-by-side view with ratios against the first report.
pub fn compare(reports: &[RunReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(BenchError::TooFewReports(reports.len()));
    }
    let base = &reports[0];
    let rows: Vec<CompareRow> = reports
        .iter()
        .map(|r| CompareRow {
            variant: r.variant.clone(),
            seed: r.seed,
            throughput: r.throughput,
            throughput_ratio: ratio(r.throughput, base.throughput),
            p50_us: r.latency.p50_us,
            p50_ratio: ratio(r.latency.p50_us as f64, base.latency.p50_us as f64),
            p99_us: r.latency.p99_us,
            p99_ratio: ratio(r.latency.p99_us as f64, base.latency.p99_us as f64),
            bytes_per_txn: r.bytes_per_txn,
            bytes_ratio: ratio(r.bytes_per_txn, base.bytes_per_txn),
            single: r.path_mix.single,
            remastered: r.path_mix.remastered,
            two_pc: r.path_mix.two_pc,
            mean_adaptation_s: r.mean_adaptation_s,
            workload_mismatch: r.workload != base.workload,
        })
        .collect();
    Ok(Comparison {
        baseline_workload: base.workload.clone(),
        workloads_match: rows.iter().all(|r| !r.workload_mismatch),
        rows,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
        let mut out = String::from(
            "variant,seed,throughput,throughput_ratio,p50_us,p50_ratio,p99_us,p99_ratio,bytes_per_txn,bytes_ratio,single,remastered,two_pc,mean_adaptation_s,workload_mismatch\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.2},{},{},{},{},{},{:.1},{},{:.4},{:.4},{:.4},{},{}",
                r.variant,
                r.seed,
                r.throughput,
                opt(r.throughput_ratio),
                r.p50_us,
                opt(r.p50_ratio),
                r.p99_us,
                opt(r.p99_ratio),
                r.bytes_per_txn,
                opt(r.bytes_ratio),
                r.single,
                r.remastered,
                r.two_pc,
                r.mean_adaptation_s.map(|v| format!("{v:.2}")).unwrap_or_default(),
                r.workload_mismatch
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }
}
