//! Versioned JSON container for model state. Floats are written in
//! shortest round-trip form, so save followed by load is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "focal-sanitizer-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint {format} v{version}")]
    Version { format: String, version: u32 },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn to_json<T: Serialize>(payload: &T) -> Result<String, CheckpointError> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        payload,
    };
    serde_json::to_string(&env).map_err(|e| CheckpointError::Format(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, CheckpointError> {
    let header: Header = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CheckpointError::Version {
            format: header.format,
            version: header.version,
        });
    }
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    Ok(env.payload)
}

pub fn save<T: Serialize>(path: &Path, payload: &T) -> Result<(), CheckpointError> {
    let text = to_json(payload)?;
    fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
