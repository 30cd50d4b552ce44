//! Driver for the edit propagation pipeline: argument parsing, staged
//! execution, artifacts and reports.

pub mod args;
mod artifacts;
pub mod commands;
pub mod pipeline;
pub mod report;

pub use pipeline::{run_pipeline, RunOptions, Stage, StageError};
pub use report::{PipelineReport, Warning};

/// Process exit code for a finished run whose solver hit its iteration cap.
pub const EXIT_NOT_CONVERGED: i32 = 2;
/// Process exit code for a hard failure.
pub const EXIT_FAILURE: i32 = 1;
