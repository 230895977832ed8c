//! Command-line driver for oscillax: configuration, stages and report files.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod plot;

use thiserror::Error;

pub use config::{Mode, RunConfig};
pub use pipeline::{run, Failure, Formats, RunOptions, RunSummary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{} check(s) failed: {}", .0.len(), .0.iter().map(|f| f.check.as_str()).collect::<Vec<_>>().join(", "))]
    Check(Vec<Failure>),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// 1 for failed checks, 2 for invalid input, 3 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Check(_) => 1,
            RunError::Config(_) => 2,
            RunError::Internal(_) => 3,
        }
    }
}
