use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{NavTable, Pose, Room, COLOR_BLUE, COLOR_GREEN, COLOR_RED, OBJ_BOX, OBJ_GOAL};
use super::*;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WageringConfig {
    pub nav_steps: usize,
    pub delay_steps: usize,
    pub wager_prob: f64,
    pub salience_min: f64,
    pub salience_max: f64,
    /// Standard deviation of additive noise on each stimulus channel.
    pub noise_sd: f64,
    pub stimulus_zone: (i32, i32),
}

impl Default for WageringConfig {
    fn default() -> Self {
        Self {
            nav_steps: 3,
            delay_steps: 2,
            wager_prob: 0.5,
            salience_min: 0.2,
            salience_max: 1.0,
            noise_sd: 0.3,
            stimulus_zone: (3, 1),
        }
    }
}

/// Perceptual decision with post-decision wagering: navigate toward the
/// stimulus zone, see a salience-degraded binary stimulus, wait, choose a
/// response zone (action 0 or 1), and on half the trials bet on the choice
/// with a continuous confidence.
#[derive(Debug, Clone)]
pub struct WageringEnv {
    cfg: WageringConfig,
    rng: ChaCha8Rng,
    room: Room,
    nav: NavTable,
    pose: Pose,
    t: usize,
    stimulus: usize,
    salience: f64,
    wager: bool,
    cue: [f64; 2],
    choice: Option<usize>,
    finished: bool,
}

impl WageringEnv {
    pub fn new(cfg: WageringConfig, seed: u64) -> Self {
        let mut room = Room::empty();
        room.marks.push((cfg.stimulus_zone.0, cfg.stimulus_zone.1, OBJ_GOAL, COLOR_BLUE));
        room.marks.push((1, room.inner as i32, OBJ_BOX, COLOR_RED));
        room.marks.push((room.inner as i32, room.inner as i32, OBJ_BOX, COLOR_GREEN));
        let nav = NavTable::new(&room, cfg.stimulus_zone);
        Self {
            rng: stream_rng(seed, 0),
            room,
            nav,
            pose: Pose { x: 1, y: 1, dir: 0 },
            t: 0,
            stimulus: 0,
            salience: 1.0,
            wager: false,
            cue: [0.0; 2],
            choice: None,
            finished: true,
            cfg,
        }
    }

    pub fn config(&self) -> &WageringConfig {
        &self.cfg
    }

    pub fn episode_len(&self) -> usize {
        self.cfg.nav_steps + self.cfg.delay_steps + 2 + usize::from(self.wager)
    }

    pub fn reset(&mut self) -> ObsTensor {
        self.stimulus = self.rng.random_range(0..2);
        self.salience = self.rng.random_range(self.cfg.salience_min..=self.cfg.salience_max);
        self.wager = self.rng.random_bool(self.cfg.wager_prob);
        let noise = Normal::new(0.0, self.cfg.noise_sd).expect("noise sd is finite");
        let mut cue = [noise.sample(&mut self.rng), noise.sample(&mut self.rng)];
        cue[self.stimulus] += self.salience;
        self.cue = cue;
        self.pose = Pose::random(&self.room, &mut self.rng);
        self.t = 0;
        self.choice = None;
        self.finished = false;
        self.obs()
    }

    fn stimulus_step(&self) -> usize {
        self.cfg.nav_steps
    }

    fn decision_step(&self) -> usize {
        self.cfg.nav_steps + self.cfg.delay_steps + 1
    }

    pub fn phase(&self) -> Phase {
        if self.finished {
            return Phase::Done;
        }
        let t = self.t;
        if t < self.stimulus_step() {
            Phase::Navigate
        } else if t == self.stimulus_step() {
            Phase::Stimulus
        } else if t < self.decision_step() {
            Phase::Delay
        } else if t == self.decision_step() {
            Phase::Decision
        } else {
            Phase::Wager
        }
    }

    pub fn obs(&self) -> ObsTensor {
        let mut obs = ObsTensor::blank();
        obs.grid = self.room.render(self.pose);
        let tv = &mut obs.task_vec;
        tv[TV_TIME] = self.t as f64 / MAX_STEPS as f64;
        tv[TV_BIAS] = 1.0;
        match self.phase() {
            Phase::Stimulus => {
                tv[TV_CUE] = 1.0;
                obs.cue[0] = self.cue[0];
                obs.cue[1] = self.cue[1];
            }
            Phase::Delay => tv[TV_DELAY] = 1.0,
            Phase::Decision => tv[TV_REPORT1] = 1.0,
            Phase::Wager => tv[TV_WAGER] = 1.0,
            _ => {}
        }
        obs
    }

    pub fn oracle_action(&self) -> Result<usize, EnvError> {
        match self.phase() {
            Phase::Decision => Ok(self.stimulus),
            Phase::Wager => Ok(ACT_DONE),
            Phase::Done => Err(EnvError::Unreachable(Phase::Done)),
            _ => Ok(self.nav.action(&self.room, self.pose)),
        }
    }

    /// The oracle knows the stimulus, so it always bets.
    pub fn oracle_confidence(&self) -> f64 {
        1.0
    }

    pub fn info(&self) -> StepInfo {
        let phase = self.phase();
        StepInfo {
            t: self.t,
            phase,
            oracle_action: self.oracle_action().unwrap_or(ACT_DONE),
            report: (phase == Phase::Decision).then_some(ReportKind::First),
            decision_step: phase == Phase::Decision,
            cue_write: phase == Phase::Stimulus,
            wager_step: phase == Phase::Wager,
            truth: (phase == Phase::Decision).then_some(self.stimulus),
            stimulus_present: self.t >= self.stimulus_step(),
            primary_target: false,
        }
    }

    /// `confidence` is read only on the wager step; `None` there means opt-out.
    pub fn step(&mut self, action: usize, confidence: Option<f64>) -> Result<StepOutcome, EnvError> {
        check_action(action)?;
        if self.finished {
            return Err(EnvError::Finished);
        }
        let mut reward = 0.0;
        match self.phase() {
            Phase::Decision => self.choice = Some(action),
            Phase::Wager => {
                let c = confidence.unwrap_or(0.0);
                if !(0.0..=1.0).contains(&c) {
                    return Err(EnvError::BadConfidence(c));
                }
                if c > 0.5 {
                    reward = if self.choice == Some(self.stimulus) { 1.0 } else { -1.0 };
                }
            }
            _ => self.pose = self.pose.apply(action, &self.room),
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
        EpisodeLabels::Wagering {
            stimulus: self.stimulus,
            salience: self.salience,
            wager: self.wager,
        }
    }
}
