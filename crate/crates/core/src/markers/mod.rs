//! Access and metacognition markers computed from episode traces.

mod broadcast;
mod complexity;
mod decoding;
mod masking;
mod metacog;
mod titration;

use serde::{Deserialize, Serialize};

pub use broadcast::{gbi, ignition_sharpness, l2_norm, participation, GBI_EPS};
pub use complexity::{
    binarize, delta_pci, lz76_normalized, lz76_phrases, pci_a, pci_trials, state_series, PciTrial, PulseSpec,
};
pub use decoding::{
    cv_auc, delta_nrs, effective_dim, fold_assignment, pca_probe_baseline, pca_project, probe_auroc, Logistic,
    CV_FOLDS, LOGISTIC_L2, MIN_PER_CLASS, NRS_SHUFFLES,
};
pub use masking::{calibrate_cue_reference, cosine, cue_signal_trace, cue_trace_value, first_negative, CueReference};
pub use metacog::{aurc, auroc_type2, calibration_curve, roc_curve, CalibrationBin};
pub use titration::{l75, L75, L75_THRESHOLD};

use crate::agents::{AgentError, EpisodeTrace};

#[derive(Debug, thiserror::Error)]
pub enum MarkerError {
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("need at least 2 active slots, got {0}")]
    TooFewSlots(usize),
    #[error("class starvation: {pos} positive / {neg} negative samples")]
    ClassStarvation { pos: usize, neg: usize },
    #[error("accuracy {0} at sigma 0 is already below 75%")]
    BelowBaseline(f64),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// One row of per-seed markers for a condition. `None` marks an undefined value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerReport {
    pub seed: u64,
    pub condition: String,
    pub gbi: f64,
    pub ignition_sharpness: f64,
    pub auroc_t2: Option<f64>,
    pub aurc: Option<f64>,
    pub pci_a: Option<f64>,
    pub delta_pci: Option<f64>,
    pub delta_nrs: Option<f64>,
    /// Number, `ABOVE_RANGE`, or empty when not measured.
    pub l75: String,
    pub per_step: f64,
    pub report_window: f64,
    pub conjunction: f64,
    pub ood_gap: Option<f64>,
    pub eff_dim: Option<f64>,
}

/// Mean GBI over trials within the decision window (first report step to
/// the end of the episode). Fewer than two active slots give 0.
pub fn trace_gbi(traces: &[EpisodeTrace], k: usize, d: usize) -> Result<f64, MarkerError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for trace in traces {
        let active = crate::agents::active_slots(k, trace.capacity_scale);
        if active < 2 {
            n += 1;
            continue;
        }
        let Some(start) = trace.steps.iter().position(|r| r.info.report.is_some()) else {
            continue;
        };
        let window: Vec<Vec<f64>> = trace.steps[start..].iter().map(|r| r.read_slots.clone()).collect();
        total += gbi(&window, active, d)?;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Mean ignition sharpness of the slot-norm series over trials.
pub fn trace_ignition(traces: &[EpisodeTrace]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces
        .iter()
        .map(|t| {
            let norms: Vec<f64> = t.steps.iter().map(|r| l2_norm(&r.read_slots)).collect();
            ignition_sharpness(&norms)
        })
        .sum::<f64>()
        / traces.len() as f64
}
