use serde::{Deserialize, Serialize};

use super::MarkerError;
use crate::agents::{run_episode, Agent, EpisodeTrace, StepControl, StepHooks};
use crate::envs::{make_env, StepInfo};
use crate::interventions::{gaussian, EvalSpec};
use crate::rng::{child_seed, stream_rng, STREAM_EVAL_ENV, STREAM_PULSE};

/// Lempel-Ziv (1976) phrase count, Kaspar-Schuster scan.
pub fn lz76_phrases(s: &[bool]) -> usize {
    let n = s.len();
    if n < 2 {
        return n;
    }
    let (mut c, mut l, mut i, mut k, mut k_max) = (1, 1, 0, 1, 1);
    loop {
        if s[i + k - 1] == s[l + k - 1] {
            k += 1;
            if l + k > n {
                c += 1;
                break;
            }
        } else {
            k_max = k_max.max(k);
            i += 1;
            if i == l {
                c += 1;
                l += k_max;
                if l + 1 > n {
                    break;
                }
                i = 0;
                k = 1;
                k_max = 1;
            } else {
                k = 1;
            }
        }
    }
    c
}

/// Phrase count normalized by `n / log2(n)`, about 1 for a fair coin.
pub fn lz76_normalized(s: &[bool]) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    lz76_phrases(s) as f64 * (n as f64).log2() / n as f64
}

/// Binarizes a post-pulse trajectory against per-dimension pre-pulse medians,
/// time-major.
pub fn binarize(pre: &[Vec<f64>], post: &[Vec<f64>]) -> Vec<bool> {
    let dim = post.first().map_or(0, Vec::len);
    let thresholds: Vec<f64> = (0..dim)
        .map(|i| {
            let mut col: Vec<f64> = pre.iter().map(|s| s[i]).collect();
            median(&mut col)
        })
        .collect();
    post.iter()
        .flat_map(|s| s.iter().zip(&thresholds).map(|(v, t)| v > t).collect::<Vec<_>>())
        .collect()
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub sigma: f64,
    /// Step at which the pulse is applied.
    pub step: usize,
    /// Post-pulse steps recorded, pulse step included.
    pub window: usize,
}

impl Default for PulseSpec {
    /// First delay step of the dual task, after both cues are encoded, so
    /// the rest of the 18-step episode gives the 16-step window.
    fn default() -> Self {
        Self {
            sigma: 0.25,
            step: 2,
            window: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PciTrial {
    pub pci: f64,
    /// Every report decision in the trial was correct.
    pub correct: bool,
}

/// Pulse site: the workspace if present, else the recurrent carrier, else
/// (feedforward agents) the observation embedding.
struct PulseHooks {
    pulse: PulseSpec,
    size: usize,
    site: Site,
    rng: rand_chacha::ChaCha8Rng,
}

#[derive(Clone, Copy, PartialEq)]
enum Site {
    Slots,
    Carrier,
    Embedding,
}

impl StepHooks for PulseHooks {
    fn control(&mut self, info: &StepInfo) -> StepControl {
        let mut ctl = StepControl::default();
        if info.t == self.pulse.step {
            let noise = gaussian(self.size, self.pulse.sigma, &mut self.rng);
            match self.site {
                Site::Slots => ctl.slot_noise = Some(noise),
                Site::Carrier => ctl.hidden_noise = Some(noise),
                Site::Embedding => ctl.embed_noise = Some(noise),
            }
        }
        ctl
    }
}

/// Recorded state trajectory used for complexity: slots, else the carrier.
pub fn state_series(agent: &Agent, trace: &EpisodeTrace) -> Vec<Vec<f64>> {
    trace
        .steps
        .iter()
        .map(|r| if agent.arch().has_workspace() { r.slots.clone() } else { r.carrier.clone() })
        .collect()
}

pub fn pci_trials(agent: &Agent, spec: &EvalSpec, pulse: &PulseSpec) -> Result<Vec<PciTrial>, MarkerError> {
    if pulse.window < 8 {
        return Err(MarkerError::Invalid(format!("pulse window {} shorter than 8 steps", pulse.window)));
    }
    let arch = agent.arch();
    let (site, size) = if arch.has_workspace() {
        (Site::Slots, agent.config.flat_dim())
    } else if arch.is_recurrent() {
        (Site::Carrier, agent.config.hidden)
    } else {
        (Site::Embedding, crate::numerics::EMBED_DIM)
    };
    let mut hooks = PulseHooks {
        pulse: pulse.clone(),
        size,
        site,
        rng: stream_rng(spec.seed, STREAM_PULSE),
    };
    let mut env = make_env(spec.task, child_seed(spec.seed, STREAM_EVAL_ENV));
    let mut out = Vec::with_capacity(spec.episodes);
    for _ in 0..spec.episodes {
        let trace = run_episode(agent, &mut env, 1.0, &mut hooks)?;
        let series = state_series(agent, &trace);
        if series.len() < pulse.step + pulse.window {
            return Err(MarkerError::Invalid(format!(
                "episode of {} steps cannot hold a {}-step window from step {}",
                series.len(),
                pulse.window,
                pulse.step
            )));
        }
        let bits = binarize(&series[..pulse.step], &series[pulse.step..pulse.step + pulse.window]);
        let decisions: Vec<bool> = trace
            .steps
            .iter()
            .filter(|r| r.info.decision_step)
            .map(|r| r.is_correct() == Some(true))
            .collect();
        out.push(PciTrial {
            pci: lz76_normalized(&bits),
            correct: !decisions.is_empty() && decisions.iter().all(|c| *c),
        });
    }
    Ok(out)
}

pub fn pci_a(trials: &[PciTrial]) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().map(|t| t.pci).sum::<f64>() / trials.len() as f64
}

/// Mean complexity on correct trials minus incorrect trials; `None` if
/// either class is empty.
pub fn delta_pci(pci: &[f64], correct: &[bool]) -> Option<f64> {
    let mean = |want: bool| {
        let v: Vec<f64> = pci.iter().zip(correct).filter(|(_, c)| **c == want).map(|(p, _)| *p).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Some(mean(true)? - mean(false)?)
}
