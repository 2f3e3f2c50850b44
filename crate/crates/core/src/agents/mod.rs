//! Agent family: feedforward (A0), recurrent (A1), workspace (B1),
//! workspace + self-model (B2), the higher-order-only control and the
//! bottleneck compressors, with checkpoints and episode rollouts.

mod checkpoint;
mod rollout;
mod step;
mod workspace;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use checkpoint::{AgentCheckpoint, TrainingMeta, CHECKPOINT_VERSION};
pub use rollout::{run_episode, EpisodeTrace, NoHooks, StepHooks, TraceRecord};
pub use step::{GraphState, StepControl, StepVars};
pub use workspace::{active_slots, workspace_read, workspace_write, write_target, WorkspaceState};

use crate::envs::{CueWiring, EnvError, CUE_DIM, N_ACTIONS};
use crate::numerics::{ConvEncoder, Gru, Linear, Mlp, NumericsError, ParamStore, Tensor, EMBED_DIM};
use crate::rng::{stream_rng, STREAM_INIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arch {
    A0,
    A1,
    B1,
    B2,
    HotOnly,
    BcLinear,
    BcMlp,
    BcRandproj,
}

impl Arch {
    pub const ALL: [Arch; 8] = [
        Arch::A0,
        Arch::A1,
        Arch::B1,
        Arch::B2,
        Arch::HotOnly,
        Arch::BcLinear,
        Arch::BcMlp,
        Arch::BcRandproj,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Arch::A0 => "A0",
            Arch::A1 => "A1",
            Arch::B1 => "B1",
            Arch::B2 => "B2",
            Arch::HotOnly => "HOT_ONLY",
            Arch::BcLinear => "BC_LINEAR",
            Arch::BcMlp => "BC_MLP",
            Arch::BcRandproj => "BC_RANDPROJ",
        }
    }

    pub fn has_workspace(self) -> bool {
        matches!(self, Arch::B1 | Arch::B2 | Arch::BcLinear | Arch::BcMlp | Arch::BcRandproj)
    }

    pub fn has_self_model(self) -> bool {
        matches!(self, Arch::B2 | Arch::HotOnly)
    }

    pub fn is_recurrent(self) -> bool {
        self != Arch::A0
    }

    pub fn bottleneck(self) -> Option<BottleneckKind> {
        match self {
            Arch::BcLinear => Some(BottleneckKind::Linear),
            Arch::BcMlp => Some(BottleneckKind::Mlp),
            Arch::BcRandproj => Some(BottleneckKind::RandomProjection),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Arch {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| AgentError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BottleneckKind {
    Linear,
    Mlp,
    RandomProjection,
}

/// What the action policy reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    /// Readout over the recurrent carrier and the flattened workspace.
    Workspace,
    /// Policy head over the self-latent only.
    ZSelf,
}

impl FromStr for Routing {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "workspace" => Ok(Routing::Workspace),
            "z_self" | "zself" => Ok(Routing::ZSelf),
            _ => Err(AgentError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("routing {routing:?} is not available for {arch}")]
    Routing { arch: Arch, routing: Routing },
    #[error("{0} has no self-model")]
    NoSelfModel(Arch),
    #[error("{0} has no recurrent carrier")]
    NoCarrier(Arch),
    #[error("unknown agent kind `{0}`")]
    UnknownKind(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub arch: Arch,
    pub hidden: usize,
    pub slots: usize,
    pub slot_dim: usize,
    pub self_dim: usize,
    pub readout_hidden: usize,
    pub wiring: CueWiring,
    pub routing: Routing,
    /// Dropout on readout hidden units during training (0 disables).
    pub dropout: f64,
}

impl AgentConfig {
    /// Defaults for an architecture: 64 hidden units, 4 slots of 16,
    /// 64-d self-latent; the self-model agents read their policy from
    /// the self-latent, the rest from the workspace readout.
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            hidden: 64,
            slots: 4,
            slot_dim: 16,
            self_dim: 64,
            readout_hidden: 64,
            wiring: if arch.has_workspace() {
                CueWiring::WorkspaceOnly
            } else {
                CueWiring::Trunk
            },
            routing: if arch.has_self_model() {
                Routing::ZSelf
            } else {
                Routing::Workspace
            },
            dropout: 0.0,
        }
    }

    pub fn with_wiring(mut self, wiring: CueWiring) -> Self {
        self.wiring = wiring;
        self
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    /// Self-model input: carrier + broadcast summary + logits + 2 scalars.
    pub fn self_input_dim(&self) -> usize {
        self.hidden + self.slot_dim + N_ACTIONS + 2
    }

    pub fn flat_dim(&self) -> usize {
        self.slots * self.slot_dim
    }

    pub fn trunk_input_dim(&self) -> usize {
        EMBED_DIM + CUE_DIM
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let arch = self.arch;
        if self.wiring == CueWiring::WorkspaceOnly && !arch.has_workspace() {
            return Err(EnvError::NoWorkspace(self.wiring).into());
        }
        let ok = match (self.routing, arch) {
            (Routing::ZSelf, a) => a.has_self_model(),
            (Routing::Workspace, Arch::HotOnly) => false,
            (Routing::Workspace, _) => true,
        };
        if !ok {
            return Err(AgentError::Routing {
                arch,
                routing: self.routing,
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AgentError::Checkpoint(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Bottleneck {
    Linear(Linear),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Modules {
    pub encoder: ConvEncoder,
    /// Feedforward trunk layer (A0 only).
    pub trunk: Option<Linear>,
    pub gru: Option<Gru>,
    pub write: Option<Linear>,
    pub bottleneck: Option<Bottleneck>,
    pub readout: Mlp,
    pub self_model: Option<Linear>,
    pub conf_head: Option<Linear>,
    pub self_policy: Option<Mlp>,
    /// Linear stimulus-presence probe on the flattened slots.
    pub stim_probe: Option<Linear>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub params: ParamStore,
    pub(crate) m: Modules,
}

impl Agent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = stream_rng(seed, STREAM_INIT);
        let mut ps = ParamStore::new();
        let c = &config;
        let arch = c.arch;
        let encoder = ConvEncoder::new(&mut ps, "enc", &mut rng);
        let n_in = c.trunk_input_dim();
        let trunk = (!arch.is_recurrent()).then(|| Linear::new(&mut ps, "trunk", n_in, c.hidden, &mut rng));
        let gru = arch.is_recurrent().then(|| Gru::new(&mut ps, "gru", n_in, c.hidden, &mut rng));
        let write = arch
            .has_workspace()
            .then(|| Linear::new(&mut ps, "write", c.hidden + CUE_DIM, c.slot_dim, &mut rng));
        let flat = c.flat_dim();
        let bottleneck = arch.bottleneck().map(|kind| match kind {
            BottleneckKind::Linear => Bottleneck::Linear(Linear::new(&mut ps, "bneck", flat, c.self_dim, &mut rng)),
            BottleneckKind::Mlp => Bottleneck::Mlp(Mlp::new(&mut ps, "bneck", &[flat, c.self_dim, c.self_dim], &mut rng)),
            BottleneckKind::RandomProjection => {
                let l = Linear::new(&mut ps, "bneck", flat, c.self_dim, &mut rng);
                ps.set_trainable(l.w, false);
                ps.set_trainable(l.b, false);
                Bottleneck::Linear(l)
            }
        });
        let readout_in = match arch {
            Arch::A0 | Arch::A1 | Arch::HotOnly => c.hidden,
            Arch::B1 | Arch::B2 => c.hidden + flat,
            Arch::BcLinear | Arch::BcMlp | Arch::BcRandproj => c.hidden + c.self_dim,
        };
        let readout = Mlp::new(&mut ps, "readout", &[readout_in, c.readout_hidden, N_ACTIONS], &mut rng);
        let (self_model, conf_head, self_policy) = if arch.has_self_model() {
            (
                Some(Linear::new(&mut ps, "self", c.self_input_dim(), c.self_dim, &mut rng)),
                Some(Linear::new(&mut ps, "conf", c.self_dim, 1, &mut rng)),
                Some(Mlp::new(&mut ps, "self_policy", &[c.self_dim, c.readout_hidden, N_ACTIONS], &mut rng)),
            )
        } else {
            (None, None, None)
        };
        let stim_probe = arch
            .has_workspace()
            .then(|| Linear::new(&mut ps, "stim_probe", flat, 1, &mut rng));
        Ok(Self {
            config,
            params: ps,
            m: Modules {
                encoder,
                trunk,
                gru,
                write,
                bottleneck,
                readout,
                self_model,
                conf_head,
                self_policy,
                stim_probe,
            },
        })
    }

    /// Control agents for the attribution analyses.
    pub fn make_control_agent(kind: &str, seed: u64) -> Result<Self, AgentError> {
        let arch: Arch = kind.parse()?;
        if !matches!(arch, Arch::HotOnly | Arch::BcLinear | Arch::BcMlp | Arch::BcRandproj) {
            return Err(AgentError::UnknownKind(kind.to_string()));
        }
        Agent::new(AgentConfig::new(arch), seed)
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    /// Frozen random-projection weights, if any.
    pub fn frozen_params(&self) -> Vec<Tensor> {
        self.params
            .entries()
            .iter()
            .filter(|e| !e.trainable)
            .map(|e| e.tensor.clone())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Zeroes every parameter (used by construction checks).
    pub fn zero_params(&mut self) {
        for i in 0..self.params.len() {
            self.params.entry_mut(i).tensor.data_mut().fill(0.0);
        }
    }

    pub(crate) fn dropout_mask(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        use rand::Rng;
        let p = self.config.dropout;
        (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
            .collect()
    }
}

/// Normalized policy entropy in [0, 1] and the top-1 minus top-2 logit margin.
pub fn uncertainty_scalars(logits: &[f64]) -> (f64, f64) {
    let p = crate::numerics::softmax(logits);
    let h: f64 = p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
    let entropy = if logits.len() > 1 { h / (logits.len() as f64).ln() } else { 0.0 };
    let mut sorted = logits.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let margin = if sorted.len() > 1 { sorted[0] - sorted[1] } else { 0.0 };
    (entropy, margin)
}
