use thiserror::Error;

pub type Result<T, E = MinerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("authentication failed with HTTP {status} on {path}")]
    Auth { status: u16, path: String },

    #[error("HTTP {status} persisted after {retries} retries on {path}")]
    RetriesExhausted {
        status: u16,
        retries: u32,
        path: String,
    },

    #[error("unexpected HTTP {status} on {path}")]
    Status { status: u16, path: String },

    #[error("transport error on {path}: {message}")]
    Transport { path: String, message: String },

    #[error("offline and no cached response for {0}")]
    Offline(String),

    #[error("malformed response from {path}: {message}")]
    Malformed { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] coderec_core::Error),
}

impl MinerError {
    /// Errors that retrying cannot fix: bad settings or credentials.
    pub fn is_config(&self) -> bool {
        matches!(self, MinerError::Config(_) | MinerError::Auth { .. })
    }
}
