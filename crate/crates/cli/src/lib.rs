//! Library surface of the experiment harness: strict config handling,
//! output bookkeeping, deterministic parallelism, and one runner per
//! experiment. The `normlab` binary is a thin shim over this crate so
//! integration tests can drive experiments in-process.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod parallel;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Anything wrong with the configuration itself; exits with code 2.
    #[error("{0}")]
    Config(String),
    /// Failures while executing a valid configuration; exits with code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! runtime_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        })+
    };
}

runtime_from!(
    std::io::Error,
    serde_json::Error,
    normlab::data::DataError,
    normlab::model::ModelError,
    normlab::train::TrainError,
    normlab::metrics::MetricsError,
    normlab::theory::TheoryError,
);
