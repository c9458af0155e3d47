use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use lion_sim::engine::OUTCOME_CSV_HEADER;
use lion_sim::{Simulator, Workload};

use crate::config::Experiment;
use crate::error::Result;
use crate::report::RunReport;

pub struct RunOutput {
    pub report: RunReport,
    /// Sampled per-transaction outcomes.
    pub latency_csv: String,
    pub trace_log: Option<String>,
    /// Host time spent; not part of the report.
    pub wall: Duration,
}

impl RunOutput {
    /// Write `report.json`, `timeline.csv`, `latency.csv` and, when kept,
    /// `trace.log` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        fs::write(dir.join("timeline.csv"), self.report.timeline_csv())?;
        fs::write(dir.join("latency.csv"), &self.latency_csv)?;
        if let Some(t) = &self.trace_log {
            fs::write(dir.join("trace.log"), t)?;
        }
        Ok(())
    }
}

/// Run one experiment to completion.
pub fn run(exp: &Experiment, keep_trace: bool) -> Result<RunOutput> {
    let started = Instant::now();
    exp.validate()?;
    let mut cfg = exp.sim_config();
    cfg.keep_trace_log = keep_trace;
    let source = exp.workload.source(exp.seed)?;
    let sim = Simulator::new(cfg, Workload::Closed { source, clients: exp.clients })?;
    let result = sim.run()?;
    let report = RunReport::build(exp, &result.stats, result.trace_hash);
    let mut latency_csv = String::from(OUTCOME_CSV_HEADER);
    latency_csv.push('\n');
    for o in &result.outcomes {
        latency_csv.push_str(&o.csv_line());
        latency_csv.push('\n');
    }
    Ok(RunOutput { report, latency_csv, trace_log: result.trace_log, wall: started.elapsed() })
}
