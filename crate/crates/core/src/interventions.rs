//! Evaluation-time manipulations of frozen agents: self-latent lesions,
//! capacity masking, slot and carrier noise, and the workspace bus audit.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::{
    run_episode, Agent, AgentError, EpisodeTrace, GraphState, NoHooks, StepControl, StepHooks, TraceRecord,
    WorkspaceState,
};
use crate::envs::{make_env, StepInfo, TaskKind, N_ACTIONS};
use crate::numerics::Graph;
use crate::rng::{child_seed, stream_rng, STREAM_CALIBRATION, STREAM_EVAL_ENV, STREAM_LESION, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InterventionKind {
    None,
    SelfLesionZero,
    SelfBlindNoise,
    SelfBlindPermute,
    CapacityScale,
    SlotNoise,
    HiddenNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    pub sigma: f64,
    /// Applied to every kind; 1.0 is the intact workspace.
    pub capacity_scale: f64,
    /// Salt for the noise stream, so different conditions draw independent noise.
    pub stream: u64,
}

impl InterventionSpec {
    pub fn none() -> Self {
        Self {
            kind: InterventionKind::None,
            sigma: 0.0,
            capacity_scale: 1.0,
            stream: 0,
        }
    }

    pub fn of(kind: InterventionKind) -> Self {
        Self { kind, ..Self::none() }
    }

    pub fn capacity(scale: f64) -> Self {
        Self {
            kind: InterventionKind::CapacityScale,
            capacity_scale: scale,
            ..Self::none()
        }
    }

    pub fn slot_noise(sigma: f64) -> Self {
        Self {
            kind: InterventionKind::SlotNoise,
            sigma,
            ..Self::none()
        }
    }

    pub fn hidden_noise(sigma: f64) -> Self {
        Self {
            kind: InterventionKind::HiddenNoise,
            sigma,
            ..Self::none()
        }
    }
}

/// Which evaluation episodes to run: the environment stream depends only
/// on `seed`, so every intervention sees the same episode sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub task: TaskKind,
    pub episodes: usize,
    pub seed: u64,
}

/// Gaussian draws of a given length; exactly zero when `sigma` is 0.
pub fn gaussian(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, sigma).expect("finite sigma");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Adds `N(0, sigma^2)` to every active slot dimension.
pub fn inject_slot_noise(ws: &WorkspaceState, sigma: f64, rng: &mut ChaCha8Rng) -> WorkspaceState {
    let mut out = ws.clone();
    let n = ws.active() * ws.d;
    for (v, e) in out.slots[..n].iter_mut().zip(gaussian(n, sigma, rng)) {
        *v += e;
    }
    out
}

/// Per-step additive noise on the slots and/or the carrier.
pub struct NoiseHooks {
    pub slot_sigma: f64,
    pub hidden_sigma: f64,
    pub flat_dim: usize,
    pub hidden: usize,
    pub rng: ChaCha8Rng,
}

impl StepHooks for NoiseHooks {
    fn control(&mut self, _info: &StepInfo) -> StepControl {
        StepControl {
            slot_noise: (self.slot_sigma > 0.0).then(|| gaussian(self.flat_dim, self.slot_sigma, &mut self.rng)),
            hidden_noise: (self.hidden_sigma > 0.0).then(|| gaussian(self.hidden, self.hidden_sigma, &mut self.rng)),
            ..StepControl::default()
        }
    }
}

/// Replaces the self-latent on every step.
enum LesionSource {
    Zero(usize),
    Moments { mean: Vec<f64>, sd: Vec<f64>, rng: ChaCha8Rng },
    /// Latents of another trial, indexed by step.
    Replay(Vec<Vec<f64>>),
}

struct LesionHooks {
    source: LesionSource,
}

impl StepHooks for LesionHooks {
    fn control(&mut self, info: &StepInfo) -> StepControl {
        let z = match &mut self.source {
            LesionSource::Zero(n) => vec![0.0; *n],
            LesionSource::Moments { mean, sd, rng } => {
                let unit = Normal::new(0.0, 1.0).expect("unit normal");
                mean.iter().zip(sd.iter()).map(|(m, s)| m + s * unit.sample(rng)).collect()
            }
            LesionSource::Replay(zs) => zs[info.t.min(zs.len() - 1)].clone(),
        };
        StepControl {
            z_override: Some(z),
            ..StepControl::default()
        }
    }
}

fn eval_env(spec: &EvalSpec) -> crate::envs::Env {
    make_env(spec.task, child_seed(spec.seed, STREAM_EVAL_ENV))
}

fn noise_rng(spec: &EvalSpec, iv: &InterventionSpec, stream: u64) -> ChaCha8Rng {
    stream_rng(child_seed(spec.seed, iv.stream), stream)
}

/// Per-dimension mean and standard deviation of the intact self-latent over
/// every step of `trials` calibration episodes.
pub fn self_latent_moments(agent: &Agent, task: TaskKind, trials: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    let mut env = make_env(task, child_seed(seed, STREAM_CALIBRATION));
    let dim = agent.config.self_dim;
    let (mut sum, mut sq, mut n) = (vec![0.0; dim], vec![0.0; dim], 0usize);
    for _ in 0..trials {
        let trace = run_episode(agent, &mut env, 1.0, &mut NoHooks)?;
        for z in trace.steps.iter().filter_map(|r| r.z_self.as_ref()) {
            for i in 0..dim {
                sum[i] += z[i];
                sq[i] += z[i] * z[i];
            }
            n += 1;
        }
    }
    let nf = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let sd = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / nf - m * m).max(0.0).sqrt())
        .collect();
    Ok((mean, sd))
}

/// Episodes used for the blind-noise calibration run.
pub const CALIBRATION_TRIALS: usize = 500;

/// Runs the evaluation episodes under one intervention.
pub fn evaluate(agent: &Agent, spec: &EvalSpec, iv: &InterventionSpec) -> Result<Vec<EpisodeTrace>, AgentError> {
    use InterventionKind::*;
    let arch = agent.arch();
    let scale = iv.capacity_scale;
    let mut env = eval_env(spec);
    let mut out = Vec::with_capacity(spec.episodes);
    match iv.kind {
        None | CapacityScale => {
            for _ in 0..spec.episodes {
                out.push(run_episode(agent, &mut env, scale, &mut NoHooks)?);
            }
        }
        SlotNoise | HiddenNoise => {
            if iv.kind == HiddenNoise && !arch.is_recurrent() {
                return Err(AgentError::NoCarrier(arch));
            }
            let mut hooks = NoiseHooks {
                slot_sigma: if iv.kind == SlotNoise { iv.sigma } else { 0.0 },
                hidden_sigma: if iv.kind == HiddenNoise { iv.sigma } else { 0.0 },
                flat_dim: agent.config.flat_dim(),
                hidden: agent.config.hidden,
                rng: noise_rng(spec, iv, STREAM_NOISE),
            };
            for _ in 0..spec.episodes {
                out.push(run_episode(agent, &mut env, scale, &mut hooks)?);
            }
        }
        SelfLesionZero | SelfBlindNoise | SelfBlindPermute => {
            if !arch.has_self_model() {
                return Err(AgentError::NoSelfModel(arch));
            }
            let dim = agent.config.self_dim;
            match iv.kind {
                SelfLesionZero => {
                    let mut hooks = LesionHooks {
                        source: LesionSource::Zero(dim),
                    };
                    for _ in 0..spec.episodes {
                        out.push(run_episode(agent, &mut env, scale, &mut hooks)?);
                    }
                }
                SelfBlindNoise => {
                    let (mean, sd) = self_latent_moments(agent, spec.task, CALIBRATION_TRIALS, spec.seed)?;
                    let mut hooks = LesionHooks {
                        source: LesionSource::Moments {
                            mean,
                            sd,
                            rng: noise_rng(spec, iv, STREAM_LESION),
                        },
                    };
                    for _ in 0..spec.episodes {
                        out.push(run_episode(agent, &mut env, scale, &mut hooks)?);
                    }
                }
                _ => {
                    let intact = evaluate(agent, spec, &InterventionSpec { kind: None, ..iv.clone() })?;
                    let latents: Vec<Vec<Vec<f64>>> = intact
                        .iter()
                        .map(|t| t.steps.iter().map(|r| r.z_self.clone().unwrap_or_default()).collect())
                        .collect();
                    let mut order: Vec<usize> = (0..latents.len()).collect();
                    order.shuffle(&mut noise_rng(spec, iv, STREAM_LESION));
                    for &j in &order {
                        let mut hooks = LesionHooks {
                            source: LesionSource::Replay(latents[j].clone()),
                        };
                        out.push(run_episode(agent, &mut env, scale, &mut hooks)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Frobenius norms of d(logits)/d(slots) at report decision steps.
    pub jacobian_norms: Vec<f64>,
    pub t1_median: f64,
    pub t3_decisions: usize,
    pub t3_flips: usize,
    pub t3_flip_rate: f64,
}

/// Standard deviation of the trunk perturbation in the isolation test.
pub const TRUNK_PERTURBATION_SD: f64 = 0.1;

/// Jacobian of the acted-on logits with respect to the slot state at step `t`
/// of a recorded episode. Rows are actions, columns the `k * d` slot values.
pub fn slot_jacobian(agent: &Agent, trace: &EpisodeTrace, t: usize) -> Result<Vec<Vec<f64>>, AgentError> {
    let (carrier, ws) = trace.state_before(t, agent);
    let rec = &trace.steps[t];
    let mut g = Graph::new();
    let bound = agent.params.bind(&mut g);
    let mut st = GraphState::import(&mut g, &carrier, &ws, true);
    let leaves = st.slots.clone();
    let vars = agent.step(&mut g, &bound, &mut st, &rec.obs, &StepControl::default(), Option::None)?;
    let mut rows = Vec::with_capacity(N_ACTIONS);
    for j in 0..N_ACTIONS {
        g.zero_grad();
        let mut seed = vec![0.0; N_ACTIONS];
        seed[j] = 1.0;
        g.backward_with(vars.logits, &seed)?;
        rows.push(leaves.iter().flat_map(|&s| g.grad_or_zero(s)).collect());
    }
    Ok(rows)
}

struct FreezeHooks {
    frozen: Vec<Vec<f64>>,
    embed_dim: usize,
    rng: ChaCha8Rng,
}

impl StepHooks for FreezeHooks {
    fn control(&mut self, info: &StepInfo) -> StepControl {
        StepControl {
            embed_noise: Some(gaussian(self.embed_dim, TRUNK_PERTURBATION_SD, &mut self.rng)),
            frozen_slots: self.frozen.get(info.t).filter(|s| !s.is_empty()).cloned(),
            ..StepControl::default()
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// T1: median Jacobian norm of the logits with respect to the slots on report
/// decision steps. T3: fraction of report decisions that flip when the trunk
/// embedding is perturbed while the slot contents are held at their clean values.
pub fn bus_audit(agent: &Agent, spec: &EvalSpec) -> Result<AuditReport, AgentError> {
    let clean = evaluate(agent, spec, &InterventionSpec::none())?;
    let mut norms = Vec::new();
    if agent.arch().has_workspace() {
        for trace in &clean {
            for (t, r) in trace.steps.iter().enumerate() {
                if r.info.decision_step {
                    let jac = slot_jacobian(agent, trace, t)?;
                    norms.push(jac.iter().flatten().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
        }
    }
    let mut env = eval_env(spec);
    let mut rng = stream_rng(spec.seed, STREAM_NOISE);
    let (mut decisions, mut flips) = (0usize, 0usize);
    for trace in &clean {
        let mut hooks = FreezeHooks {
            frozen: trace.steps.iter().map(|r| r.read_slots.clone()).collect(),
            embed_dim: crate::numerics::EMBED_DIM,
            rng: rng.clone(),
        };
        let perturbed = run_episode(agent, &mut env, 1.0, &mut hooks)?;
        rng = hooks.rng;
        for (a, b) in trace.steps.iter().zip(&perturbed.steps) {
            if a.info.decision_step {
                decisions += 1;
                flips += usize::from(a.action != b.action);
            }
        }
    }
    let jacobian_norms = norms.clone();
    Ok(AuditReport {
        t1_median: median(&mut norms),
        jacobian_norms,
        t3_decisions: decisions,
        t3_flips: flips,
        t3_flip_rate: if decisions == 0 { 0.0 } else { flips as f64 / decisions as f64 },
    })
}

/// Fraction of correct decisions at report decision steps.
pub fn decision_accuracy(traces: &[EpisodeTrace]) -> f64 {
    let recs: Vec<&TraceRecord> = traces
        .iter()
        .flat_map(|t| t.steps.iter())
        .filter(|r| r.info.decision_step)
        .collect();
    if recs.is_empty() {
        return 0.0;
    }
    recs.iter().filter(|r| r.is_correct() == Some(true)).count() as f64 / recs.len() as f64
}
