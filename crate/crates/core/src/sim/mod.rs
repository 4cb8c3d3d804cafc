//! Scenario files, the fixed-step multi-agent simulator, verification and
//! output writers.

use std::path::PathBuf;

use thiserror::Error;

pub mod batch;
pub mod engine;
pub mod output;
pub mod scenario;
pub mod verify;

pub use batch::{par_map, random_restricted_word, random_scenario, run, run_batch, Execution, Outcome, RandomSpec};
pub use engine::{prepare, simulate, Plan, Prepared, TrajectoryLog, WaypointHit};
pub use output::{emit_outputs, render_svg, write_csv, OutputPaths};
pub use scenario::{ControllerKind, RegionSpec, Scenario, Weight};
pub use verify::{verify, Tolerances, VerificationReport};

/// Process exit code for a verified run.
pub const EXIT_VERIFIED: i32 = 0;
/// The run completed but a verdict failed.
pub const EXIT_VERIFICATION_FAILED: i32 = 2;
/// Bad scenario, scheduling or planning precondition.
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("controller failed in step {step} at t={time}: {message}")]
    Controller { step: usize, time: f64, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Io { .. } => 1,
            _ => EXIT_PRECONDITION,
        }
    }
}
