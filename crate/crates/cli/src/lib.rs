//! Command-line pipelines around the `parabolic-obstacle` crate.
//!
//! Exit codes: 0 when every hard assertion held, 1 for configuration or
//! input errors, 2 for numerical failures, 3 when a check failed.

pub mod app;
pub mod commands;
pub mod config;

use parabolic_obstacle::Error;

pub use config::{ExperimentConfig, Invalid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "POBS_THREADS";

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return EXIT_INVALID;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonConvergence { .. } | Error::IrlsStagnation { .. } => EXIT_NUMERICAL,
                _ => EXIT_INVALID,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_INVALID;
        }
    }
    EXIT_NUMERICAL
}
