//! Reproducible multi-packet campaigns and their datasets.

pub mod config;
pub mod figures;
pub mod output;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{CampaignConfig, ConfigError, Mode};
pub use figures::emit_figures;
pub use output::{read_packets_csv, write_keyrate, write_outputs, PacketRow};
pub use run::{run_campaign, CampaignRun};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] crate::Error),
    #[error("session: {0}")]
    Session(#[from] crate::protocol::SessionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0} not found; run the campaign first")]
    MissingInput(PathBuf),
    #[error("{path}: unexpected columns `{found}`")]
    Schema { path: PathBuf, found: String },
}

impl CampaignError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

/// Runs a campaign and writes its datasets; the common path of the CLI.
pub fn simulate(cfg: &CampaignConfig) -> Result<(CampaignRun, Vec<PathBuf>), CampaignError> {
    let run = run_campaign(cfg)?;
    let paths = write_outputs(cfg, &run)?;
    Ok((run, paths))
}
