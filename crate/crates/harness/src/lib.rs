//! Scenario runner, trace checkers and metrics for the Morpheus simulator.

pub mod checks;
pub mod dag;
pub mod fixtures;
pub mod metrics;
pub mod scenario;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Config(#[from] morpheus_sim::ConfigInvalid),
    #[error("trace: {0}")]
    Trace(#[from] morpheus_sim::TraceError),
}
