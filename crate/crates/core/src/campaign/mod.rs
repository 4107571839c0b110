//! Campaign orchestration: configuration matrices, seeds, the parser
//! exchange, and the run loops that turn pages into records.

mod adapter;
mod matrix;
mod runner;

use thiserror::Error;

pub use adapter::{
    read_batch, run_mock_exchange, write_batch, InputManifest, JobStatus, ManifestJob, MockAdapter, OutputManifest, ParseJob,
    ParserAdapter,
};
#[cfg(feature = "subprocess")]
pub use adapter::SubprocessAdapter;
pub use matrix::{decode_config, derive_seed, matrix, sweep_seed, ConfigEntry, ConfigSpec, MatrixKind, SweepSpec, BASE_SEED, NT_TARGETS};
pub use runner::{
    completed_pairs, decision_label, load_pool, run_phase1, run_phase2, write_skips, CampaignOptions, CampaignOutput, CleanCache,
    Exclusion, Phase2Options, PoolPage, RunLog, Skip, MIN_SPANS,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("unknown config id `{0}`")]
    UnknownConfig(String),
    #[error("adapter: {0}")]
    Adapter(String),
    #[error("pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
