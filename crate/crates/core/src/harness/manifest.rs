use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{e1, e2, e3, HarnessConfig, HarnessError};
use crate::agents::AgentConfig;
use crate::envs::TaskKind;
use crate::interventions::InterventionSpec;
use crate::training::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    E1,
    E2,
    E3,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::E3 => "e3",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(Experiment::E1),
            "e2" => Ok(Experiment::E2),
            "e3" => Ok(Experiment::E3),
            _ => Err(format!("unknown experiment `{s}`")),
        }
    }
}

/// One agent family trained per seed. `train.seed` is a placeholder that is
/// replaced by each run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub label: String,
    pub agent: AgentConfig,
    pub task: TaskKind,
    pub train: TrainConfig,
}

impl TrainPlan {
    pub fn for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `e1`, `e2`, `e3`, or `pilot-<exp>` for non-default configurations.
    pub id: String,
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub base_seed_from_env: bool,
    pub config: HarnessConfig,
    pub train_plans: Vec<TrainPlan>,
    pub interventions: Vec<InterventionSpec>,
    pub engine_version: String,
    pub config_hash: String,
    pub created_unix: u64,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct HashInput<'a> {
    id: &'a str,
    experiment: Experiment,
    seeds: &'a [u64],
    config: ScopedConfig,
    train_plans: &'a [TrainPlan],
    interventions: &'a [InterventionSpec],
    engine_version: &'a str,
}

/// The parts of a config one experiment reads; settings of the other
/// experiments and the worker count do not affect its outputs.
#[derive(Debug, PartialEq, Serialize)]
struct ScopedConfig {
    version: u32,
    base_seed: u64,
    gate: f64,
    settings: serde_json::Value,
}

impl ScopedConfig {
    fn of(config: &HarnessConfig, experiment: Experiment) -> Self {
        let settings = match experiment {
            Experiment::E1 => serde_json::to_value(&config.e1),
            Experiment::E2 => serde_json::to_value(&config.e2),
            Experiment::E3 => serde_json::to_value(&config.e3),
        }
        .expect("settings serialize");
        Self {
            version: config.version,
            base_seed: config.base_seed,
            gate: config.gate,
            settings,
        }
    }
}

impl RunManifest {
    pub fn new(experiment: Experiment, config: HarnessConfig, base_seed_from_env: bool) -> Self {
        let (train_plans, interventions, outputs) = match experiment {
            Experiment::E1 => (e1::plans(&config), e1::interventions(), e1::OUTPUTS),
            Experiment::E2 => (e2::plans(&config), e2::interventions(&config), e2::OUTPUTS),
            Experiment::E3 => (e3::plans(&config), e3::interventions(&config), e3::OUTPUTS),
        };
        let default = HarnessConfig {
            base_seed: config.base_seed,
            ..HarnessConfig::default()
        };
        let pilot = ScopedConfig::of(&default, experiment) != ScopedConfig::of(&config, experiment);
        let id = if pilot {
            format!("pilot-{experiment}")
        } else {
            experiment.id().to_string()
        };
        let mut m = Self {
            id,
            experiment,
            seeds: config.seed_list(),
            base_seed_from_env,
            config,
            train_plans,
            interventions,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: String::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        m.config_hash = m.compute_hash();
        m
    }

    /// Digest of everything that determines the outputs (timestamps, worker
    /// count and other experiments' settings excluded).
    pub fn compute_hash(&self) -> String {
        let input = HashInput {
            id: &self.id,
            experiment: self.experiment,
            seeds: &self.seeds,
            config: ScopedConfig::of(&self.config, self.experiment),
            train_plans: &self.train_plans,
            interventions: &self.interventions,
            engine_version: &self.engine_version,
        };
        let json = serde_json::to_string(&input).expect("manifest serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn short_hash(&self) -> &str {
        &self.config_hash[..12]
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let m: Self = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        if m.compute_hash() != m.config_hash {
            return Err(HarnessError::Config(format!("{}: manifest hash mismatch", dir.display())));
        }
        Ok(m)
    }
}
