//! Behavior cloning from oracle demonstrations: weighted KL on the oracle's
//! action, a correctness-prediction loss for the confidence head and an
//! optional stimulus-presence probe, with held-out validation gating.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::{
    run_episode, Agent, AgentCheckpoint, AgentConfig, AgentError, GraphState, NoHooks, StepControl, StepVars,
    TrainingMeta, WorkspaceState,
};
use crate::envs::{make_env, CueWiring, Env, EpisodeLabels, ReportKind, StepInfo, TaskKind};
use crate::numerics::{adam_step, argmax, AdamConfig, AdamState, Graph, Var};
use crate::rng::{child_seed, stream_rng, STREAM_TRAIN_AUX, STREAM_TRAIN_ENV, STREAM_VALID_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateGranularity {
    /// Backprop through the whole episode, one optimizer update per episode.
    PerEpisode,
    /// One update per step with the recurrent state detached between steps.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub lr: f64,
    pub report_step_weight: f64,
    pub primary_class_weight: f64,
    /// Weight of the correctness BCE on report steps (0 disables it).
    pub meta_loss_coeff: f64,
    pub stimulus_aux: bool,
    pub weight_decay: f64,
    /// Std of slot noise added after every write during training (0 disables it).
    pub slot_noise_aug: f64,
    pub update: UpdateGranularity,
    pub validation_episodes: usize,
    pub log_every: usize,
    /// Held-out episodes scored at each log row.
    pub log_eval_episodes: usize,
    pub gate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 4000,
            lr: 1e-3,
            report_step_weight: 3.0,
            primary_class_weight: 20.0,
            meta_loss_coeff: 0.0,
            stimulus_aux: false,
            weight_decay: 0.0,
            slot_noise_aug: 0.0,
            update: UpdateGranularity::PerEpisode,
            validation_episodes: 200,
            log_every: 100,
            log_eval_episodes: 10,
            gate: 0.95,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Metacognition experiment: 4000 episodes, meta loss and stimulus probe.
    pub fn e1(seed: u64) -> Self {
        Self {
            meta_loss_coeff: 1.0,
            stimulus_aux: true,
            seed,
            ..Self::default()
        }
    }

    pub fn e2(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn e3(seed: u64) -> Self {
        Self {
            episodes: 8000,
            meta_loss_coeff: 1.0,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub episodes: usize,
    /// Per-step argmax agreement with the oracle over all steps.
    pub imitation: f64,
    /// Same, excluding report steps.
    pub imitation_nonreport: f64,
    /// Accuracy over every report step.
    pub per_step: f64,
    /// Accuracy at the first step of each report window.
    pub report_window: f64,
    /// Fraction of dual-task episodes with both decisions correct.
    pub conjunction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub mean_loss: f64,
    pub imitation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub checkpoint: AgentCheckpoint,
    pub validation: ValidationMetrics,
    pub log: Vec<TrainLogRow>,
}

/// KL weight of a step: report steps ×`report_step_weight`, primary-cue
/// targets additionally ×`primary_class_weight`.
pub fn kl_weight(info: &StepInfo, cfg: &TrainConfig) -> f64 {
    let mut w = 1.0;
    if info.report.is_some() {
        w *= cfg.report_step_weight;
    }
    if info.primary_target {
        w *= cfg.primary_class_weight;
    }
    w
}

/// Meta-loss target: whether the agent's own argmax matches the truth on a report step.
pub fn correctness_label(info: &StepInfo, logits: &[f64]) -> Result<bool, AgentError> {
    match info.truth {
        Some(t) if info.report.is_some() => Ok(argmax(logits) == t),
        _ => Err(AgentError::Checkpoint(format!("step {} is not a report step", info.t))),
    }
}

/// Stimulus-presence probe BCE given the probe output.
pub fn stimulus_aux_loss(g: &mut Graph, stim_prob: Var, present: bool) -> Result<Var, AgentError> {
    Ok(g.bce(stim_prob, if present { 1.0 } else { 0.0 }, 1.0)?)
}

/// Value-level probe loss on a workspace state (used in checks).
pub fn stimulus_aux_value(ws: &WorkspaceState, weights: &[f64], bias: f64, present: bool) -> f64 {
    let z: f64 = ws.slots.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias;
    let p = crate::numerics::sigmoid(z).clamp(crate::numerics::BCE_CLAMP, 1.0 - crate::numerics::BCE_CLAMP);
    if present {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Total loss of one step.
pub fn step_loss(
    g: &mut Graph,
    vars: &StepVars,
    info: &StepInfo,
    cfg: &TrainConfig,
) -> Result<Var, AgentError> {
    let target = info.oracle_dist();
    let w = kl_weight(info, cfg);
    let mut loss = g.softmax_kl(vars.logits, &target, w)?;
    // With the policy routed through the self-latent, the workspace readout
    // still learns the task so the self-model sees meaningful draft logits.
    if vars.logits != vars.draft {
        let d = g.softmax_kl(vars.draft, &target, w)?;
        loss = g.add(loss, d)?;
    }
    if cfg.meta_loss_coeff > 0.0 && info.report.is_some() {
        if let Some(conf) = vars.confidence {
            let correct = correctness_label(info, g.value(vars.logits))?;
            let m = g.bce(conf, if correct { 1.0 } else { 0.0 }, cfg.meta_loss_coeff)?;
            loss = g.add(loss, m)?;
        }
    }
    if cfg.stimulus_aux {
        if let Some(p) = vars.stim_prob {
            let s = stimulus_aux_loss(g, p, info.stimulus_present)?;
            loss = g.add(loss, s)?;
        }
    }
    Ok(loss)
}

fn slot_noise(agent: &Agent, sd: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    if sd <= 0.0 || !agent.arch().has_workspace() {
        return None;
    }
    let n = Normal::new(0.0, sd).expect("finite sd");
    Some((0..agent.config.flat_dim()).map(|_| n.sample(rng)).collect())
}

/// Runs one oracle demonstration (the environment follows the oracle's
/// actions) and applies the configured updates. Returns the summed loss.
fn train_episode(
    agent: &mut Agent,
    env: &mut Env,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    aux_rng: &mut ChaCha8Rng,
) -> Result<f64, AgentError> {
    let mut obs = env.reset();
    let mut info = env.info();
    match cfg.update {
        UpdateGranularity::PerEpisode => {
            let mut g = Graph::new();
            let bound = agent.params.bind(&mut g);
            let mut st = GraphState::initial(agent, &mut g, 1.0);
            let mut total: Option<Var> = None;
            loop {
                let ctl = StepControl {
                    slot_noise: slot_noise(agent, cfg.slot_noise_aug, aux_rng),
                    ..StepControl::default()
                };
                let vars = agent.step(&mut g, &bound, &mut st, &obs, &ctl, Some(aux_rng))?;
                let l = step_loss(&mut g, &vars, &info, cfg)?;
                total = Some(match total {
                    Some(t) => g.add(t, l)?,
                    None => l,
                });
                let out = env.step(info.oracle_action, None)?;
                if out.done {
                    break;
                }
                obs = out.obs;
                info = out.info;
            }
            let total = total.expect("episodes have at least one step");
            let value = g.scalar(total);
            g.backward(total)?;
            let grads = agent.params.collect_grads(&g, &bound);
            adam_step(&mut agent.params, &grads, adam)?;
            Ok(value)
        }
        UpdateGranularity::PerStep => {
            let c = agent.config.clone();
            let mut carrier = vec![0.0; c.hidden];
            let mut ws = WorkspaceState::new(c.slots, c.slot_dim, 1.0);
            let mut sum = 0.0;
            loop {
                let mut g = Graph::new();
                let bound = agent.params.bind(&mut g);
                let mut st = GraphState::import(&mut g, &carrier, &ws, false);
                let ctl = StepControl {
                    slot_noise: slot_noise(agent, cfg.slot_noise_aug, aux_rng),
                    ..StepControl::default()
                };
                let vars = agent.step(&mut g, &bound, &mut st, &obs, &ctl, Some(aux_rng))?;
                let l = step_loss(&mut g, &vars, &info, cfg)?;
                sum += g.scalar(l);
                if agent.arch().is_recurrent() {
                    carrier = g.value(st.h).to_vec();
                }
                ws = st.workspace(&g, 1.0);
                g.backward(l)?;
                let grads = agent.params.collect_grads(&g, &bound);
                adam_step(&mut agent.params, &grads, adam)?;
                let out = env.step(info.oracle_action, None)?;
                if out.done {
                    break;
                }
                obs = out.obs;
                info = out.info;
            }
            Ok(sum)
        }
    }
}

/// Autonomous rollouts scored against oracle labels only.
pub fn validate(agent: &Agent, task: TaskKind, n_episodes: usize, seed: u64) -> Result<ValidationMetrics, AgentError> {
    let mut env = make_env(task, child_seed(seed, STREAM_VALID_ENV));
    let (mut steps, mut agree, mut nr_steps, mut nr_agree) = (0usize, 0usize, 0usize, 0usize);
    let (mut rep, mut rep_ok, mut dec, mut dec_ok, mut conj, mut dual) = (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    for _ in 0..n_episodes {
        let trace = run_episode(agent, &mut env, 1.0, &mut NoHooks)?;
        for r in &trace.steps {
            let ok = r.action == r.info.oracle_action;
            steps += 1;
            agree += usize::from(ok);
            if r.info.report.is_some() {
                rep += 1;
                rep_ok += usize::from(ok);
                if r.info.decision_step {
                    dec += 1;
                    dec_ok += usize::from(ok);
                }
            } else {
                nr_steps += 1;
                nr_agree += usize::from(ok);
            }
        }
        if matches!(trace.labels, EpisodeLabels::Dual { .. }) && trace.decision(ReportKind::Second).is_some() {
            dual += 1;
            conj += usize::from(trace.conjunction_correct());
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ValidationMetrics {
        episodes: n_episodes,
        imitation: frac(agree, steps),
        imitation_nonreport: frac(nr_agree, nr_steps),
        per_step: frac(rep_ok, rep),
        report_window: frac(dec_ok, dec),
        conjunction: frac(conj, dual),
    })
}

/// Accuracy that the convergence gate is applied to. Agents whose cue
/// wiring is dropped cannot solve report steps by construction, so only
/// their navigation imitation is gated.
pub fn gate_accuracy(config: &AgentConfig, m: &ValidationMetrics) -> f64 {
    if config.wiring == CueWiring::Dropped {
        m.imitation_nonreport
    } else {
        m.imitation
    }
}

pub fn train_agent(config: AgentConfig, task: TaskKind, cfg: &TrainConfig) -> Result<TrainOutcome, AgentError> {
    let mut agent = Agent::new(config, cfg.seed)?;
    let mut env = make_env(task, child_seed(cfg.seed, STREAM_TRAIN_ENV));
    let mut aux_rng = stream_rng(cfg.seed, STREAM_TRAIN_AUX);
    let mut adam = AdamState::new(
        &agent.params,
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut log = Vec::new();
    let mut window = Vec::with_capacity(cfg.log_every.max(1));
    let mut final_loss = f64::NAN;
    for ep in 0..cfg.episodes {
        let loss = train_episode(&mut agent, &mut env, cfg, &mut adam, &mut aux_rng)?;
        window.push(loss);
        if cfg.log_every > 0 && (ep + 1) % cfg.log_every == 0 {
            let mean_loss = window.iter().sum::<f64>() / window.len() as f64;
            final_loss = mean_loss;
            window.clear();
            let imitation = if cfg.log_eval_episodes > 0 {
                let m = validate(&agent, task, cfg.log_eval_episodes, child_seed(cfg.seed, ep as u64))?;
                gate_accuracy(&agent.config, &m)
            } else {
                f64::NAN
            };
            log.push(TrainLogRow {
                episode: ep + 1,
                mean_loss,
                imitation,
            });
        }
    }
    if !window.is_empty() {
        final_loss = window.iter().sum::<f64>() / window.len() as f64;
    }
    let validation = validate(&agent, task, cfg.validation_episodes, cfg.seed)?;
    let gated = gate_accuracy(&agent.config, &validation);
    let meta = TrainingMeta {
        task: format!("{task:?}"),
        episodes: cfg.episodes,
        final_loss,
        imitation_accuracy: gated,
        excluded: gated <= cfg.gate,
    };
    let checkpoint = AgentCheckpoint::from_agent(&agent, cfg.seed, meta);
    Ok(TrainOutcome {
        agent,
        checkpoint,
        validation,
        log,
    })
}

pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}
