//! Gridworld tasks: the confidence-wagering task, the dual-report memory
//! task (with its held-out-pair and backward-masking variants) and the
//! algorithmic oracle for each.
//!
//! Observations follow the MiniGrid convention: a 7x7x3 symbolic grid of
//! (object id, color, state) plus a task vector and a real-valued cue
//! channel. The task vector layout is
//!
//! | index | meaning                                               |
//! |-------|-------------------------------------------------------|
//! | 0     | cue present on this step (workspace write trigger)    |
//! | 1     | first report window (dual) / decision step (wagering) |
//! | 2     | second report window (dual)                           |
//! | 3     | wager step                                            |
//! | 4     | delay phase                                           |
//! | 5     | step index / 32                                       |
//! | 6     | constant 1                                            |
//!
//! The cue channel has `CUE_DIM` entries: a one-hot color code (0..7), a
//! one-hot object code (7..14) and a mask flag (14). The wagering task uses
//! entries 0 and 1 for its salience-scaled, noisy binary stimulus.

mod dual;
mod grid;
mod log;
mod routing;
mod wagering;

use serde::{Deserialize, Serialize};

pub use dual::{CueSplit, DualTaskConfig, DualTaskEnv};
pub use grid::{nav_action, NavTable, Pose, Room, DIRS};
pub use log::{obs_hash, read_episode_log, write_episode_log, EpisodeLogRecord, LOG_SCHEMA_VERSION};
pub use routing::{strong_lesion_route, CueWiring};
pub use wagering::{WageringConfig, WageringEnv};

use crate::numerics::{GRID_CHANNELS, GRID_SIDE, TASK_DIM};

pub const N_ACTIONS: usize = 7;
pub const MAX_STEPS: usize = 32;
pub const CUE_DIM: usize = 15;
pub const N_CUE_VALUES: usize = 7;
pub const MASK_FLAG: usize = 14;

pub const ACT_LEFT: usize = 0;
pub const ACT_RIGHT: usize = 1;
pub const ACT_FORWARD: usize = 2;
pub const ACT_DONE: usize = 6;

pub const TV_CUE: usize = 0;
pub const TV_REPORT1: usize = 1;
pub const TV_REPORT2: usize = 2;
pub const TV_WAGER: usize = 3;
pub const TV_DELAY: usize = 4;
pub const TV_TIME: usize = 5;
pub const TV_BIAS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("action {0} out of range 0..7")]
    ActionOutOfRange(usize),
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("episode is finished; call reset")]
    Finished,
    #[error("no oracle action for phase {0:?}")]
    Unreachable(Phase),
    #[error("cue wiring {0:?} needs an agent with a workspace")]
    NoWorkspace(CueWiring),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsTensor {
    /// Row-major `[row][col][channel]`.
    pub grid: Vec<u8>,
    pub task_vec: [f64; TASK_DIM],
    pub cue: [f64; CUE_DIM],
}

impl ObsTensor {
    pub fn blank() -> Self {
        Self {
            grid: vec![0; GRID_SIDE * GRID_SIDE * GRID_CHANNELS],
            task_vec: [0.0; TASK_DIM],
            cue: [0.0; CUE_DIM],
        }
    }

    /// Channel-major real embedding `[3, 7, 7]` with each channel scaled
    /// into roughly [0, 1].
    pub fn embed_grid(&self) -> Vec<f64> {
        const SCALE: [f64; GRID_CHANNELS] = [10.0, 5.0, 3.0];
        let n = GRID_SIDE * GRID_SIDE;
        let mut out = vec![0.0; GRID_CHANNELS * n];
        for cell in 0..n {
            for ch in 0..GRID_CHANNELS {
                out[ch * n + cell] = self.grid[cell * GRID_CHANNELS + ch] as f64 / SCALE[ch];
            }
        }
        out
    }

    pub fn cue_present(&self) -> bool {
        self.task_vec[TV_CUE] > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Navigate,
    Stimulus,
    Decision,
    Wager,
    EncodeSecondary,
    EncodePrimary,
    Delay,
    Mask,
    Report1,
    Report2,
    Done,
}

/// Which report a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    /// Dual-task secondary (color) report, or the wagering decision.
    First,
    /// Dual-task primary (object) report.
    Second,
}

/// Labels and oracle target for the step about to be taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t: usize,
    pub phase: Phase,
    pub oracle_action: usize,
    pub report: Option<ReportKind>,
    /// First step of a report window; the step whose argmax is "the decision".
    pub decision_step: bool,
    pub cue_write: bool,
    pub wager_step: bool,
    /// Ground-truth report action on report steps.
    pub truth: Option<usize>,
    /// Wagering task: the stimulus has been shown at or before this step.
    pub stimulus_present: bool,
    /// Whether the oracle's target class is the primary-cue report.
    pub primary_target: bool,
}

impl StepInfo {
    pub fn oracle_dist(&self) -> [f64; N_ACTIONS] {
        let mut d = [0.0; N_ACTIONS];
        d[self.oracle_action] = 1.0;
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub obs: ObsTensor,
    pub reward: f64,
    pub done: bool,
    /// Info for the new current state (meaningless once `done`).
    pub info: StepInfo,
}

/// Per-episode ground truth exposed for analysis (never to agents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpisodeLabels {
    Wagering { stimulus: usize, salience: f64, wager: bool },
    Dual { color: usize, object: usize, masks: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Wagering,
    Dual,
    DualHeldOut,
    MaskingProbe,
}

/// Closed set of environments driven by the training and evaluation loops.
#[derive(Debug, Clone)]
pub enum Env {
    Wagering(WageringEnv),
    Dual(DualTaskEnv),
}

impl Env {
    pub fn reset(&mut self) -> ObsTensor {
        match self {
            Env::Wagering(e) => e.reset(),
            Env::Dual(e) => e.reset(),
        }
    }

    pub fn obs(&self) -> ObsTensor {
        match self {
            Env::Wagering(e) => e.obs(),
            Env::Dual(e) => e.obs(),
        }
    }

    pub fn info(&self) -> StepInfo {
        match self {
            Env::Wagering(e) => e.info(),
            Env::Dual(e) => e.info(),
        }
    }

    pub fn step(&mut self, action: usize, confidence: Option<f64>) -> Result<StepOutcome, EnvError> {
        match self {
            Env::Wagering(e) => e.step(action, confidence),
            Env::Dual(e) => e.step(action),
        }
    }

    pub fn oracle_action(&self) -> Result<usize, EnvError> {
        match self {
            Env::Wagering(e) => e.oracle_action(),
            Env::Dual(e) => e.oracle_action(),
        }
    }

    pub fn labels(&self) -> EpisodeLabels {
        match self {
            Env::Wagering(e) => e.labels(),
            Env::Dual(e) => e.labels(),
        }
    }

    pub fn episode_len(&self) -> usize {
        match self {
            Env::Wagering(e) => e.episode_len(),
            Env::Dual(e) => e.episode_len(),
        }
    }
}

/// Builds the environment for `task` with its default configuration.
pub fn make_env(task: TaskKind, seed: u64) -> Env {
    match task {
        TaskKind::Wagering => Env::Wagering(WageringEnv::new(WageringConfig::default(), seed)),
        TaskKind::Dual => Env::Dual(DualTaskEnv::new(DualTaskConfig::default(), seed)),
        TaskKind::DualHeldOut => Env::Dual(make_ood_env(&DualTaskConfig::default(), seed)),
        TaskKind::MaskingProbe => Env::Dual(DualTaskEnv::new(DualTaskConfig::masking_probe(5), seed)),
    }
}

/// Same task script, but episodes draw only the held-out (color, object)
/// pairs that in-distribution episodes never show.
pub fn make_ood_env(base: &DualTaskConfig, seed: u64) -> DualTaskEnv {
    let cfg = DualTaskConfig {
        split: CueSplit::HeldOut,
        ..base.clone()
    };
    DualTaskEnv::new(cfg, seed)
}

pub(crate) fn check_action(action: usize) -> Result<(), EnvError> {
    if action >= N_ACTIONS {
        Err(EnvError::ActionOutOfRange(action))
    } else {
        Ok(())
    }
}
