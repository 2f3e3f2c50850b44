use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{NavTable, Pose, Room, COLOR_GREEN, OBJ_GOAL};
use super::*;
use crate::rng::stream_rng;

/// Which (color, object) cue pairs an environment draws from. Pairs always
/// have distinct values; the held-out set is every pair whose value offset
/// `(object - color) mod 7` equals 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CueSplit {
    InDistribution,
    HeldOut,
}

const HELD_OUT_OFFSET: usize = 3;

impl CueSplit {
    pub fn pairs(self) -> Vec<(usize, usize)> {
        let n = N_CUE_VALUES;
        let mut out = Vec::new();
        for c in 0..n {
            for o in 0..n {
                if c == o {
                    continue;
                }
                let held_out = (o + n - c) % n == HELD_OUT_OFFSET;
                if held_out == (self == CueSplit::HeldOut) {
                    out.push((c, o));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualTaskConfig {
    pub delay_steps: usize,
    pub report_window: usize,
    /// Distractor writes during the delay are drawn uniformly from 0..=max_masks.
    pub max_masks: usize,
    pub split: CueSplit,
    /// Backward-masking probe: a single color cue followed immediately by
    /// this many distractor writes, then the first report window.
    pub probe_masks: Option<usize>,
    pub goal: (i32, i32),
}

impl Default for DualTaskConfig {
    fn default() -> Self {
        Self {
            delay_steps: 12,
            report_window: 2,
            max_masks: 2,
            split: CueSplit::InDistribution,
            probe_masks: None,
            goal: (5, 5),
        }
    }
}

impl DualTaskConfig {
    pub fn masking_probe(masks: usize) -> Self {
        Self {
            probe_masks: Some(masks),
            ..Self::default()
        }
    }

    pub fn episode_len(&self) -> usize {
        match self.probe_masks {
            Some(m) => 1 + m + self.report_window,
            None => 2 + self.delay_steps + 2 * self.report_window,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.report_window == 0 {
            return Err(EnvError::Config("report_window must be positive".into()));
        }
        if self.max_masks > self.delay_steps {
            return Err(EnvError::Config("more masks than delay steps".into()));
        }
        if self.episode_len() > MAX_STEPS {
            return Err(EnvError::Config(format!(
                "episode length {} exceeds {MAX_STEPS}",
                self.episode_len()
            )));
        }
        Ok(())
    }
}

/// Dual-report working-memory task: a color cue then an object cue, a
/// navigation delay with distractor writes, a report window for the color
/// (secondary) and then one for the object (primary).
#[derive(Debug, Clone)]
pub struct DualTaskEnv {
    cfg: DualTaskConfig,
    rng: ChaCha8Rng,
    room: Room,
    nav: NavTable,
    pairs: Vec<(usize, usize)>,
    pose: Pose,
    t: usize,
    color: usize,
    object: usize,
    mask_steps: Vec<usize>,
    mask_cues: Vec<(usize, usize)>,
    finished: bool,
}

impl DualTaskEnv {
    pub fn new(cfg: DualTaskConfig, seed: u64) -> Self {
        cfg.validate().expect("valid dual-task config");
        let mut room = Room::empty();
        room.marks.push((cfg.goal.0, cfg.goal.1, OBJ_GOAL, COLOR_GREEN));
        let nav = NavTable::new(&room, cfg.goal);
        let pairs = cfg.split.pairs();
        Self {
            rng: stream_rng(seed, 0),
            pose: Pose { x: 1, y: 1, dir: 0 },
            room,
            nav,
            pairs,
            t: 0,
            color: 0,
            object: 1,
            mask_steps: Vec::new(),
            mask_cues: Vec::new(),
            finished: true,
            cfg,
        }
    }

    pub fn config(&self) -> &DualTaskConfig {
        &self.cfg
    }

    pub fn episode_len(&self) -> usize {
        self.cfg.episode_len()
    }

    pub fn reset(&mut self) -> ObsTensor {
        let (c, o) = self.pairs[self.rng.random_range(0..self.pairs.len())];
        self.color = c;
        self.object = o;
        self.pose = Pose::random(&self.room, &mut self.rng);
        self.t = 0;
        self.mask_steps = match self.cfg.probe_masks {
            Some(m) => (1..=m).collect(),
            None => {
                let k = self.rng.random_range(0..=self.cfg.max_masks);
                let mut steps: Vec<usize> = sample(&mut self.rng, self.cfg.delay_steps, k)
                    .into_iter()
                    .map(|i| 2 + i)
                    .collect();
                steps.sort_unstable();
                steps
            }
        };
        self.mask_cues = (0..self.mask_steps.len())
            .map(|_| {
                (
                    self.rng.random_range(0..N_CUE_VALUES),
                    self.rng.random_range(0..N_CUE_VALUES),
                )
            })
            .collect();
        self.finished = false;
        self.obs()
    }

    fn report1_start(&self) -> usize {
        match self.cfg.probe_masks {
            Some(m) => 1 + m,
            None => 2 + self.cfg.delay_steps,
        }
    }

    pub fn phase(&self) -> Phase {
        if self.finished {
            return Phase::Done;
        }
        let t = self.t;
        let r1 = self.report1_start();
        let w = self.cfg.report_window;
        if t == 0 {
            Phase::EncodeSecondary
        } else if t == 1 && self.cfg.probe_masks.is_none() {
            Phase::EncodePrimary
        } else if t < r1 {
            if self.mask_steps.contains(&t) {
                Phase::Mask
            } else {
                Phase::Delay
            }
        } else if t < r1 + w {
            Phase::Report1
        } else {
            Phase::Report2
        }
    }

    pub fn obs(&self) -> ObsTensor {
        let mut obs = ObsTensor::blank();
        obs.grid = self.room.render(self.pose);
        let phase = self.phase();
        let tv = &mut obs.task_vec;
        tv[TV_TIME] = self.t as f64 / MAX_STEPS as f64;
        tv[TV_BIAS] = 1.0;
        match phase {
            Phase::EncodeSecondary => {
                tv[TV_CUE] = 1.0;
                obs.cue[self.color] = 1.0;
            }
            Phase::EncodePrimary => {
                tv[TV_CUE] = 1.0;
                obs.cue[N_CUE_VALUES + self.object] = 1.0;
            }
            Phase::Mask => {
                tv[TV_CUE] = 1.0;
                tv[TV_DELAY] = 1.0;
                let i = self.mask_steps.iter().position(|&s| s == self.t).unwrap_or(0);
                let (mc, mo) = self.mask_cues[i];
                obs.cue[mc] = 1.0;
                obs.cue[N_CUE_VALUES + mo] = 1.0;
                obs.cue[MASK_FLAG] = 1.0;
            }
            Phase::Delay => tv[TV_DELAY] = 1.0,
            Phase::Report1 => tv[TV_REPORT1] = 1.0,
            Phase::Report2 => tv[TV_REPORT2] = 1.0,
            _ => {}
        }
        obs
    }

    pub fn oracle_action(&self) -> Result<usize, EnvError> {
        match self.phase() {
            Phase::Report1 => Ok(self.color),
            Phase::Report2 => Ok(self.object),
            Phase::Done => Err(EnvError::Unreachable(Phase::Done)),
            _ => Ok(self.nav.action(&self.room, self.pose)),
        }
    }

    pub fn info(&self) -> StepInfo {
        let phase = self.phase();
        let r1 = self.report1_start();
        let w = self.cfg.report_window;
        let (report, truth) = match phase {
            Phase::Report1 => (Some(ReportKind::First), Some(self.color)),
            Phase::Report2 => (Some(ReportKind::Second), Some(self.object)),
            _ => (None, None),
        };
        StepInfo {
            t: self.t,
            phase,
            oracle_action: self.oracle_action().unwrap_or(ACT_DONE),
            report,
            decision_step: self.t == r1 || self.t == r1 + w,
            cue_write: matches!(phase, Phase::EncodeSecondary | Phase::EncodePrimary | Phase::Mask),
            wager_step: false,
            truth,
            stimulus_present: false,
            primary_target: phase == Phase::Report2,
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        check_action(action)?;
        if self.finished {
            return Err(EnvError::Finished);
        }
        let info = self.info();
        let mut reward = 0.0;
        if info.report.is_some() {
            if info.decision_step && Some(action) == info.truth {
                reward = 1.0;
            }
        } else {
            self.pose = self.pose.apply(action, &self.room);
        }
        self.t += 1;
        if self.t >= self.episode_len() {
            self.finished = true;
        }
        Ok(StepOutcome {
            obs: self.obs(),
            reward,
            done: self.finished,
            info: self.info(),
        })
    }

    pub fn labels(&self) -> EpisodeLabels {
        EpisodeLabels::Dual {
            color: self.color,
            object: self.object,
            masks: self.mask_steps.clone(),
        }
    }
}
