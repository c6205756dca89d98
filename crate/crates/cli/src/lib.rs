//! Scenario runner behind the `cptring` binary: configs, the figure presets
//! and CSV/JSON emission.

use std::path::PathBuf;

pub mod config;
pub mod output;
mod scenarios;

pub use config::{Format, Preset, Scenario, ScenarioConfig};
pub use output::{Column, Metadata, ScenarioResult};
pub use scenarios::{distribution_grid, preset_config, run_scenario};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Model(#[from] cptring::error::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
