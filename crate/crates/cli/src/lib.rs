//! Operator surface for coderec: dataset preparation, feature encoding,
//! training, evaluation, recommendation and a small HTTP service.

pub mod run;
pub mod serve;

use thiserror::Error;

pub use run::{
    encode_features, load_run, prepare, resolve_user, train_run, EncodeSummary, LoadedRun,
    RecommendItem, RecommendResponse, Snapshot, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] coderec_core::Error),
    #[error(transparent)]
    Miner(#[from] coderec_miner::MinerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for usage errors, 3 for data-integrity errors, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use coderec_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(E::Argument(_) | E::Config(_) | E::NotFound(_)) => 2,
            CliError::Miner(e) if e.is_config() => 2,
            CliError::Miner(coderec_miner::MinerError::Core(e)) if e.is_data_error() => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
