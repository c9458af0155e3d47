//! Placement model, co-access graph clustering, replica rearrangement
//! planning, workload prediction and synthetic workload generators.

pub mod error;
pub mod graph;
pub mod model;
pub mod planner;
pub mod predictor;
pub mod workloads;

pub use error::{CoreError, Result};
