//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (inventory, manifest, checkpoint, CSV).
    #[error("format error: {0}")]
    Format(String),

    /// A phone symbol is not present in the inventory.
    #[error("unknown phone {0:?}")]
    UnknownPhone(String),

    /// Tensor / sequence shape mismatch, tagged with the operation name.
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A caller violated an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An enumeration oracle was asked for an instance above its size bound.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint inventory fingerprint does not match the loaded inventory.
    #[error("inventory fingerprint mismatch: checkpoint has {found}, inventory is {expected}")]
    FingerprintMismatch { expected: String, found: String },

    /// Checkpoint format version is not supported.
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// Training loss became non-finite.
    #[error("training diverged (non-finite loss) at batch {batch_index}, utterances [{utterances}]")]
    Diverged {
        batch_index: usize,
        utterances: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
