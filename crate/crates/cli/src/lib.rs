//! Library surface of the `sbr` command-line tool: CSV ingestion, the draw
//! archive format, and the error-to-exit-code mapping. Kept as a library so
//! the integration tests can read artifacts back without shelling out twice.

pub mod archive;
pub mod ingest;

use std::fmt;

/// CLI errors, grouped by the exit code they map to.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input data (exit code 2).
    Input(String),
    /// Numerical failure inside a sampler (exit code 3).
    Numerical(String),
    /// Invalid configuration or argument combination (exit code 4).
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sbr_core::Error> for CliError {
    fn from(e: sbr_core::Error) -> Self {
        use sbr_core::Error as E;
        match e {
            E::Domain(m) => CliError::Config(m),
            E::InsufficientData(m) => CliError::Config(m),
            E::LinearAlgebra(m) => CliError::Numerical(m),
            E::Numerical(m) => CliError::Numerical(m),
            E::DegenerateWeights => {
                CliError::Numerical("degenerate importance weights".into())
            }
            E::Fit(m) => CliError::Numerical(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Hex SHA-256 of the canonical JSON serialization of a config. Serializing
/// the parsed struct (fixed field order, normalized numbers) makes the hash
/// insensitive to command-line formatting.
pub fn config_hash<T: serde::Serialize>(config: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
