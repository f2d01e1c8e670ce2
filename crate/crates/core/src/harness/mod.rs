//! Command-line tools and the benchmark runner.

pub mod bench;
pub mod charts;
pub mod cli;
pub mod config;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
/// Solver divergence or failed benchmark cases.
pub const EXIT_FAILED: i32 = 3;

/// Process exit code for an error surfaced by a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format(_) | Error::DimensionMismatch(_) => EXIT_IO,
        Error::Parameter(_) | Error::Precondition(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_FAILED,
    }
}
