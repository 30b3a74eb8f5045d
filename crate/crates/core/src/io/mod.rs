//! Configuration files, run logs, replay and reports.

pub mod config;
pub mod replay;
pub mod report;
pub mod runlog;

pub use config::{AgentKind, BackendConfig, BackendKind, ConfigError, ExperimentConfig};
pub use replay::{replay_trial, ReplayError, ReplayReport};
pub use report::{analyze, Report, ReportError};
pub use runlog::{Header, RunLog, RunLogError, RunLogWriter, SCHEMA_VERSION};
