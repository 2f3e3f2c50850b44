use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::markers::PulseSpec;

pub const CONFIG_VERSION: u32 = 1;
/// Overrides `base_seed` when set; the override is recorded in the manifest.
pub const BASE_SEED_ENV: &str = "GWLAB_BASE_SEED";
pub const DESK_SEEDS: usize = 5;
pub const FULL_SCALE_SEEDS: usize = 20;
pub const DEFAULT_SIGMA_GRID: [f64; 8] = [0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.5];

/// Either a seed count (`base_seed + 0..n`) or explicit offsets from `base_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(usize),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn resolve(&self, base: u64) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n as u64).map(|i| base + i).collect(),
            SeedSpec::List(v) => v.iter().map(|i| base + i).collect(),
        }
    }
}

impl FromStr for SeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|e| format!("seed `{p}`: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(SeedSpec::List)
        } else {
            s.trim().parse().map(SeedSpec::Count).map_err(|e| format!("seeds `{s}`: {e}"))
        }
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedSpec::Count(n) => write!(f, "{n}"),
            SeedSpec::List(v) => {
                let parts: Vec<String> = v.iter().map(u64::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// E3 agent variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    B1,
    /// B1 with readout dropout and weight decay.
    B1Reg,
    /// B1 trained with slot-noise augmentation.
    B1Aug,
    /// B2 with the policy read from the self-latent.
    B2,
    /// B2 with the policy read from the workspace.
    B2WsRead,
    BcLinear,
    BcMlp,
    BcRandproj,
    HotOnly,
    A1,
    A0,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::B1,
        Variant::B1Reg,
        Variant::B1Aug,
        Variant::B2,
        Variant::B2WsRead,
        Variant::BcLinear,
        Variant::BcMlp,
        Variant::BcRandproj,
        Variant::HotOnly,
        Variant::A1,
        Variant::A0,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Variant::B1 => "B1",
            Variant::B1Reg => "B1_REG",
            Variant::B1Aug => "B1_AUG",
            Variant::B2 => "B2",
            Variant::B2WsRead => "B2_WS_READ",
            Variant::BcLinear => "BC_LINEAR",
            Variant::BcMlp => "BC_MLP",
            Variant::BcRandproj => "BC_RANDPROJ",
            Variant::HotOnly => "HOT_ONLY",
            Variant::A1 => "A1",
            Variant::A0 => "A0",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct E1Settings {
    /// Per-episode updates on ~7.5-step wagering episodes; 30000 matches the
    /// update count of 4000 episodes trained with one update per step.
    pub train_episodes: usize,
    pub validation_episodes: usize,
    /// Wagering trials per seed and condition.
    pub eval_episodes: usize,
    pub calibration_bins: usize,
}

impl Default for E1Settings {
    fn default() -> Self {
        Self {
            train_episodes: 30000,
            validation_episodes: 200,
            eval_episodes: 400,
            calibration_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct E2Settings {
    /// 7200 18-step episodes match the optimizer-step count of 4000 32-step ones.
    pub train_episodes: usize,
    pub validation_episodes: usize,
    pub eval_episodes: usize,
    pub capacities: Vec<f64>,
    pub nrs_scales: Vec<f64>,
    pub nrs_episodes: usize,
    pub masking_episodes: usize,
    pub masking_calibration_episodes: usize,
    pub audit_episodes: usize,
    pub permutations: usize,
}

impl Default for E2Settings {
    fn default() -> Self {
        Self {
            train_episodes: 7200,
            validation_episodes: 200,
            eval_episodes: 32,
            capacities: vec![1.0, 0.5, 0.0],
            nrs_scales: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            nrs_episodes: 200,
            masking_episodes: 64,
            masking_calibration_episodes: 64,
            audit_episodes: 16,
            permutations: 9999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct E3Settings {
    pub train_episodes: usize,
    pub validation_episodes: usize,
    pub variants: Vec<Variant>,
    pub sigma_grid: Vec<f64>,
    pub episodes_per_level: usize,
    pub marker_episodes: usize,
    pub ood_episodes: usize,
    pub pulse: PulseSpec,
}

impl Default for E3Settings {
    fn default() -> Self {
        Self {
            train_episodes: 8000,
            validation_episodes: 200,
            variants: Variant::ALL.to_vec(),
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            episodes_per_level: 50,
            marker_episodes: 32,
            ood_episodes: 100,
            pulse: PulseSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub version: u32,
    pub base_seed: u64,
    pub seeds: SeedSpec,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    /// Held-out imitation accuracy a seed must exceed to enter analysis.
    pub gate: f64,
    pub e1: E1Settings,
    pub e2: E2Settings,
    pub e3: E3Settings,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            base_seed: 0,
            seeds: SeedSpec::Count(DESK_SEEDS),
            workers: 0,
            gate: 0.95,
            e1: E1Settings::default(),
            e2: E2Settings::default(),
            e3: E3Settings::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the base-seed environment override; returns whether it was set.
    pub fn apply_env(&mut self) -> Result<bool, HarnessError> {
        match std::env::var(BASE_SEED_ENV) {
            Ok(v) => {
                self.base_seed = v
                    .trim()
                    .parse()
                    .map_err(|e| HarnessError::Config(format!("{BASE_SEED_ENV}={v}: {e}")))?;
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.resolve(self.base_seed)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let grid = &self.e3.sigma_grid;
        if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("sigma grid {grid:?} must start at 0 and increase"));
        }
        for s in self.e2.capacities.iter().chain(&self.e2.nrs_scales) {
            if !(0.0..=1.0).contains(s) {
                return bad(format!("capacity scale {s} outside [0, 1]"));
            }
        }
        if self.e2.permutations < 999 {
            return bad(format!("{} permutations (need >= 999)", self.e2.permutations));
        }
        Ok(())
    }
}
