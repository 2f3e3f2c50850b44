use serde::{Deserialize, Serialize};

use super::MarkerError;
use crate::agents::{run_episode, Agent, EpisodeTrace, NoHooks};
use crate::envs::{DualTaskConfig, DualTaskEnv, Env, EpisodeLabels, Phase, N_CUE_VALUES};
use crate::rng::{child_seed, STREAM_CALIBRATION, STREAM_EVAL_ENV};

/// Per-color reference write directions and the similarity midpoint between
/// a slot holding the cue and a slot holding a mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueReference {
    pub directions: Vec<Vec<f64>>,
    pub match_similarity: f64,
    pub mask_similarity: f64,
}

impl CueReference {
    pub fn center(&self) -> f64 {
        0.5 * (self.match_similarity + self.mask_similarity)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn probe_env(seed: u64, masks: usize) -> Env {
    Env::Dual(DualTaskEnv::new(DualTaskConfig::masking_probe(masks), seed))
}

fn color_of(trace: &EpisodeTrace) -> usize {
    match trace.labels {
        EpisodeLabels::Dual { color, .. } => color,
        _ => 0,
    }
}

fn written(trace: &EpisodeTrace, t: usize, d: usize) -> Option<&[f64]> {
    let r = &trace.steps[t];
    r.wrote.map(|i| &r.slots[i * d..(i + 1) * d])
}

/// Estimates the references from full-capacity masking-probe episodes: at
/// least `episodes`, extended (up to 10x) until every color has been seen.
pub fn calibrate_cue_reference(agent: &Agent, episodes: usize, seed: u64, masks: usize) -> Result<CueReference, MarkerError> {
    let d = agent.config.slot_dim;
    let mut env = probe_env(child_seed(seed, STREAM_CALIBRATION), masks);
    let mut sums = vec![vec![0.0; d]; N_CUE_VALUES];
    let mut seen = [false; N_CUE_VALUES];
    let mut traces = Vec::with_capacity(episodes);
    while traces.len() < episodes || (!seen.iter().all(|s| *s) && traces.len() < 10 * episodes.max(1)) {
        let trace = run_episode(agent, &mut env, 1.0, &mut NoHooks)?;
        if let Some(w) = written(&trace, 0, d) {
            seen[color_of(&trace)] = true;
            for (s, v) in sums[color_of(&trace)].iter_mut().zip(w) {
                *s += v;
            }
        }
        traces.push(trace);
    }
    if sums.iter().any(|s| s.iter().all(|v| *v == 0.0)) {
        return Err(MarkerError::Degenerate("cue reference has zero norm"));
    }
    let (mut matched, mut nm, mut masked, mut nk) = (0.0, 0usize, 0.0, 0usize);
    for trace in &traces {
        let reference = &sums[color_of(trace)];
        for (t, r) in trace.steps.iter().enumerate() {
            let Some(w) = written(trace, t, d) else { continue };
            let c = cosine(w, reference);
            if r.info.phase == Phase::Mask {
                masked += c;
                nk += 1;
            } else {
                matched += c;
                nm += 1;
            }
        }
    }
    Ok(CueReference {
        directions: sums,
        match_similarity: matched / nm.max(1) as f64,
        mask_similarity: masked / nk.max(1) as f64,
    })
}

/// Cue signal of one slot state: best cosine of an occupied active slot with
/// the cue direction, minus the reference midpoint; 0 with nothing stored.
pub fn cue_trace_value(slots: &[f64], occupied: &[bool], active: usize, d: usize, direction: &[f64], center: f64) -> f64 {
    let best = (0..active)
        .filter(|&i| occupied[i])
        .map(|i| cosine(&slots[i * d..(i + 1) * d], direction))
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        best - center
    } else {
        0.0
    }
}

/// Mean cue signal per step over masking-probe episodes at a capacity.
pub fn cue_signal_trace(
    agent: &Agent,
    reference: &CueReference,
    capacity_scale: f64,
    episodes: usize,
    seed: u64,
    masks: usize,
) -> Result<Vec<f64>, MarkerError> {
    let c = &agent.config;
    let active = crate::agents::active_slots(c.slots, capacity_scale);
    let mut env = probe_env(child_seed(seed, STREAM_EVAL_ENV), masks);
    let mut sums: Vec<f64> = Vec::new();
    for _ in 0..episodes {
        let trace = run_episode(agent, &mut env, capacity_scale, &mut NoHooks)?;
        let dir = &reference.directions[color_of(&trace)];
        if sums.is_empty() {
            sums = vec![0.0; trace.steps.len()];
        }
        for (s, r) in sums.iter_mut().zip(&trace.steps) {
            *s += cue_trace_value(&r.slots, &r.occupied, active, c.slot_dim, dir, reference.center());
        }
    }
    Ok(sums.iter().map(|s| s / episodes.max(1) as f64).collect())
}

/// First step at or after `from` where the trace is negative.
pub fn first_negative(trace: &[f64], from: usize) -> Option<usize> {
    (from..trace.len()).find(|&t| trace[t] < 0.0)
}
