use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentConfig, AgentError, Arch};
use crate::numerics::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub task: String,
    pub episodes: usize,
    pub final_loss: f64,
    /// Validation imitation accuracy on non-report steps.
    pub imitation_accuracy: f64,
    pub excluded: bool,
}

/// Serialized agent. Floats are written with round-trip precision, so a
/// reload is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub arch: Arch,
    pub config: AgentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub params: ParamStore,
    pub meta: TrainingMeta,
}

impl AgentCheckpoint {
    pub fn from_agent(agent: &Agent, seed: u64, meta: TrainingMeta) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            arch: agent.arch(),
            config: agent.config.clone(),
            config_hash: agent.config.hash(),
            seed,
            params: agent.params.clone(),
            meta,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let ck: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "{}: version {} (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        if ck.config.hash() != ck.config_hash || ck.config.arch != ck.arch {
            return Err(AgentError::Checkpoint(format!("{}: config hash mismatch", path.display())));
        }
        Ok(ck)
    }

    pub fn to_agent(&self) -> Result<Agent, AgentError> {
        let mut agent = Agent::new(self.config.clone(), self.seed)?;
        agent.params.load_from(&self.params)?;
        Ok(agent)
    }
}
