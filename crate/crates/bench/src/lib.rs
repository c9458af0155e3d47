//! Experiment harness: config files, the ablation variants, single runs,
//! run reports and side-by-side comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod variant;

pub use compare::{compare, Comparison, CompareRow};
pub use config::{Experiment, WorkloadKind, WorkloadSpec};
pub use error::{BenchError, Result};
pub use report::{adaptation, RunReport, Shift};
pub use run::{run, RunOutput};
pub use variant::Variant;
