//! Driver for the `ets-sim` binary: config loading, the worked-example
//! replay, simulation runs, oracle verification and parameter sweeps.

pub mod replay;
pub mod run;
pub mod verify;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("worked example mismatch:\n{}", .0.join("\n"))]
    GoldenMismatch(Vec<String>),
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::GoldenMismatch(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

impl From<ets_core::Error> for CliError {
    fn from(e: ets_core::Error) -> Self {
        match e {
            ets_core::Error::Scenario(e) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses a JSON document, reporting the failing field path and position.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        let field = if at == "." { String::new() } else { format!(" at `{at}`") };
        CliError::Config(format!("{}{field}: {inner}", path.display()))
    })
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads.filter(|t| *t > 0) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
