use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, GraphState, StepControl, StepVars, WorkspaceState};
use crate::envs::{Env, EpisodeLabels, ObsTensor, ReportKind, StepInfo};
use crate::numerics::{argmax, Graph};

/// Everything recorded about one agent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub info: StepInfo,
    pub obs: ObsTensor,
    pub action: usize,
    pub logits: Vec<f64>,
    pub draft: Vec<f64>,
    pub confidence: Option<f64>,
    pub stim_prob: Option<f64>,
    pub embed: Vec<f64>,
    /// Carrier after this step (A0: its hidden layer).
    pub carrier: Vec<f64>,
    /// Slot state after this step's write and noise, `k * d` (empty without a workspace).
    pub slots: Vec<f64>,
    /// Slot contents the readout actually saw (differs only under freezing).
    pub read_slots: Vec<f64>,
    pub occupied: Vec<bool>,
    pub z_self: Option<Vec<f64>>,
    pub wrote: Option<usize>,
    pub reward: f64,
}

impl TraceRecord {
    pub fn is_correct(&self) -> Option<bool> {
        self.info.truth.map(|t| t == self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub labels: EpisodeLabels,
    pub capacity_scale: f64,
    pub steps: Vec<TraceRecord>,
}

impl EpisodeTrace {
    pub fn decision(&self, kind: ReportKind) -> Option<&TraceRecord> {
        self.steps
            .iter()
            .find(|r| r.info.decision_step && r.info.report == Some(kind))
    }

    pub fn decision_correct(&self, kind: ReportKind) -> Option<bool> {
        self.decision(kind).and_then(|r| r.is_correct())
    }

    /// Both dual-task reports correct at their decision steps.
    pub fn conjunction_correct(&self) -> bool {
        self.decision_correct(ReportKind::First) == Some(true) && self.decision_correct(ReportKind::Second) == Some(true)
    }

    pub fn wager(&self) -> Option<&TraceRecord> {
        self.steps.iter().find(|r| r.info.wager_step)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|r| r.reward).sum()
    }

    /// Carrier and workspace state in effect before step `t`.
    pub fn state_before(&self, t: usize, agent: &Agent) -> (Vec<f64>, WorkspaceState) {
        let c = &agent.config;
        let mut ws = WorkspaceState::new(c.slots, c.slot_dim, self.capacity_scale);
        if t == 0 {
            return (vec![0.0; c.hidden], ws);
        }
        let prev = &self.steps[t - 1];
        if !prev.slots.is_empty() {
            ws.slots.clone_from(&prev.slots);
            ws.occupied.clone_from(&prev.occupied);
        }
        let carrier = if agent.arch().is_recurrent() {
            prev.carrier.clone()
        } else {
            vec![0.0; c.hidden]
        };
        (carrier, ws)
    }
}

/// Per-step interception points for evaluation-time manipulations.
pub trait StepHooks {
    fn control(&mut self, _info: &StepInfo) -> StepControl {
        StepControl::default()
    }

    fn observe(&mut self, _record: &TraceRecord) {}
}

pub struct NoHooks;

impl StepHooks for NoHooks {}

/// Resets `env` and runs the agent greedily to the end of the episode. On
/// wager steps the agent bets with the confidence it reported at the
/// decision; agents without a confidence head opt out.
pub fn run_episode(
    agent: &Agent,
    env: &mut Env,
    capacity_scale: f64,
    hooks: &mut dyn StepHooks,
) -> Result<EpisodeTrace, AgentError> {
    let mut obs = env.reset();
    let mut info = env.info();
    let mut g = Graph::new();
    let bound = agent.params.bind(&mut g);
    let mut st = GraphState::initial(agent, &mut g, capacity_scale);
    let mut steps = Vec::with_capacity(env.episode_len());
    let mut decision_conf = None;
    loop {
        let ctl = hooks.control(&info);
        let vars = agent.step(&mut g, &bound, &mut st, &obs, &ctl, None)?;
        let mut record = record_step(&g, &st, &vars, &info, &obs);
        if info.decision_step {
            decision_conf = record.confidence;
        }
        // The bet placed on a wager step is the confidence reported with the decision.
        let conf = if info.wager_step { decision_conf } else { record.confidence };
        let out = env.step(record.action, conf)?;
        record.reward = out.reward;
        hooks.observe(&record);
        steps.push(record);
        if out.done {
            break;
        }
        obs = out.obs;
        info = out.info;
    }
    Ok(EpisodeTrace {
        labels: env.labels(),
        capacity_scale,
        steps,
    })
}

fn flat_of(g: &Graph, vars: &[crate::numerics::Var]) -> Vec<f64> {
    vars.iter().flat_map(|&v| g.value(v).iter().copied()).collect()
}

pub(crate) fn record_step(g: &Graph, st: &GraphState, vars: &StepVars, info: &StepInfo, obs: &ObsTensor) -> TraceRecord {
    let logits = g.value(vars.logits).to_vec();
    let has_ws = vars.flat.is_some();
    TraceRecord {
        info: info.clone(),
        obs: obs.clone(),
        action: argmax(&logits),
        draft: g.value(vars.draft).to_vec(),
        logits,
        confidence: vars.confidence.map(|c| g.scalar(c)),
        stim_prob: vars.stim_prob.map(|c| g.scalar(c)),
        embed: g.value(vars.embed).to_vec(),
        carrier: g.value(vars.core).to_vec(),
        slots: if has_ws { flat_of(g, &st.slots) } else { Vec::new() },
        read_slots: if has_ws { flat_of(g, &vars.slots) } else { Vec::new() },
        occupied: st.occupied.clone(),
        z_self: vars.z_self.map(|z| g.value(z).to_vec()),
        wrote: vars.wrote,
        reward: 0.0,
    }
}
