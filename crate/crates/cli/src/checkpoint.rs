//! JSON checkpoints of a free-boundary run, guarded by a SHA-256 checksum.
//!
//! Floats go through serde_json's exact round trip, so a resumed run
//! continues from bit-identical data.

use std::path::Path;

use kppfront::free_boundary::{FrontState, TimeSeries};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub version: u32,
    pub config: RunConfig,
    pub state: FrontState,
    pub series: TimeSeries,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    payload: serde_json::Value,
    sha256: String,
}

fn digest(payload: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(payload).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn to_json(payload: &Payload) -> String {
    let value = serde_json::to_value(payload).expect("payload serializes");
    let sha256 = digest(&value);
    let mut s = serde_json::to_string(&Envelope { payload: value, sha256 }).expect("envelope serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Payload, CliError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| CliError::CorruptCheckpoint(e.to_string()))?;
    if digest(&env.payload) != env.sha256 {
        return Err(CliError::CorruptCheckpoint("checksum mismatch".into()));
    }
    let found = env.payload.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_VERSION {
        return Err(CliError::VersionMismatch {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_value(env.payload).map_err(|e| CliError::CorruptCheckpoint(e.to_string()))
}

pub fn save(path: &Path, payload: &Payload) -> Result<(), CliError> {
    std::fs::write(path, to_json(payload)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Payload, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}

/// The blocks that determine a trajectory must match; output settings and
/// the other subcommands' blocks may change between runs.
pub fn check_drift(saved: &RunConfig, current: &RunConfig) -> Result<(), CliError> {
    let mut drift = Vec::new();
    if saved.model != current.model {
        drift.push("model");
    }
    if saved.kernel != current.kernel {
        drift.push("kernel");
    }
    if saved.reaction != current.reaction {
        drift.push("reaction");
    }
    if saved.simulation != current.simulation {
        drift.push("simulation");
    }
    if drift.is_empty() {
        Ok(())
    } else {
        Err(CliError::ConfigDrift(drift.join(", ")))
    }
}
