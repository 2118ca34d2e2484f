//! Error classification and config-file plumbing shared by the commands.

use std::path::{Path, PathBuf};

use mdd_core::inventory::PhoneInventory;
use mdd_core::Error as CoreError;

/// Exit-code class. Usage = 1, Data = 2, Runtime = 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Data,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Runtime,
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Config(_) => ExitKind::Usage,
            CoreError::Format(_)
            | CoreError::UnknownPhone(_)
            | CoreError::FingerprintMismatch { .. }
            | CoreError::UnsupportedVersion { .. }
            | CoreError::Json(_) => ExitKind::Data,
            CoreError::Shape { .. }
            | CoreError::Contract(_)
            | CoreError::TooLarge(_)
            | CoreError::Diverged { .. }
            | CoreError::Io(_) => ExitKind::Runtime,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(format!("I/O error: {e}"))
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Environment variable naming a directory to search for config files
/// given by relative paths that do not exist under the working directory.
pub const CONFIG_DIR_ENV: &str = "MDD_CONFIG_DIR";

/// Resolves a config-file path, falling back to `$MDD_CONFIG_DIR/<path>`.
pub fn resolve_config_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let alt = Path::new(&dir).join(path);
        if alt.exists() {
            return alt;
        }
    }
    path.to_path_buf()
}

/// Loads and parses a JSON config file.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let resolved = resolve_config_path(path);
    let text = std::fs::read_to_string(&resolved)
        .map_err(|e| CliError::usage(format!("cannot read config {resolved:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {resolved:?}: {e}")))
}

/// Loads the phone inventory from `--phones`, or the built-in default set.
pub fn load_inventory(phones: Option<&Path>) -> CliResult<PhoneInventory> {
    match phones {
        Some(p) => {
            let resolved = resolve_config_path(p);
            PhoneInventory::load(&resolved).map_err(|e| CliError::data(e.to_string()))
        }
        None => Ok(PhoneInventory::default_set()),
    }
}

pub fn write_file(path: &Path, content: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}
