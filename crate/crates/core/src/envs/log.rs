use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ObsTensor, Phase, StepInfo};

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRecord {
    pub schema_version: u32,
    pub episode: usize,
    pub t: usize,
    pub phase: Phase,
    pub obs_hash: String,
    pub action: usize,
    pub reward: f64,
    pub info: StepInfo,
}

/// First 16 hex digits of a SHA-256 over the grid bytes and the bit
/// patterns of the task vector and cue channel.
pub fn obs_hash(obs: &ObsTensor) -> String {
    let mut h = Sha256::new();
    h.update(&obs.grid);
    for v in obs.task_vec.iter().chain(obs.cue.iter()) {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn write_episode_log<W: Write>(mut w: W, records: &[EpisodeLogRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log<R: BufRead>(r: R) -> std::io::Result<Vec<EpisodeLogRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
