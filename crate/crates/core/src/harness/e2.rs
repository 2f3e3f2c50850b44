//! Workspace capacity: A0, A1 and B1 trained on the dual task with cues
//! kept out of the trunk, then evaluated across capacity scales for report
//! accuracy, decodability of blocked-report states, masking persistence,
//! broadcast markers and the bus audit.

use serde::{Deserialize, Serialize};

use super::manifest::TrainPlan;
use super::run::{mean_of, train_cached, write_csv, Exclusion, ExperimentDetails, ExperimentResult, NamedStat, RunDir};
use super::{HarnessConfig, HarnessError};
use crate::agents::{Agent, AgentConfig, Arch, EpisodeTrace};
use crate::envs::{CueWiring, EpisodeLabels, TaskKind};
use crate::interventions::{bus_audit, evaluate, EvalSpec, InterventionSpec};
use crate::markers::{
    calibrate_cue_reference, cue_signal_trace, delta_nrs, first_negative, trace_gbi, trace_ignition, MarkerError,
    MarkerReport,
};
use crate::rng::{child_seed, stream_rng, STREAM_STATS};
use crate::stats::bootstrap_ci;
use crate::training::TrainConfig;

pub(crate) const OUTPUTS: &[&str] = &[
    "e2_capacity.csv",
    "e2_granularity.csv",
    "e2_masking.csv",
    "e2_nrs.csv",
    "e2_audit.csv",
];

/// Masks per masking-probe episode.
pub const PROBE_MASKS: usize = 5;
/// Step whose post-step state is decoded for the blocked-report analysis
/// (first delay step, after both cues).
pub const NRS_STEP: usize = 2;

pub(crate) fn plans(cfg: &HarnessConfig) -> Vec<TrainPlan> {
    let s = &cfg.e2;
    let train = TrainConfig {
        episodes: s.train_episodes,
        validation_episodes: s.validation_episodes,
        gate: cfg.gate,
        ..TrainConfig::e2(0)
    };
    [
        (Arch::A0, CueWiring::Dropped),
        (Arch::A1, CueWiring::Dropped),
        (Arch::B1, CueWiring::WorkspaceOnly),
    ]
    .into_iter()
    .map(|(arch, wiring)| TrainPlan {
        label: arch.id().to_string(),
        agent: AgentConfig::new(arch).with_wiring(wiring),
        task: TaskKind::Dual,
        train: train.clone(),
    })
    .collect()
}

pub(crate) fn interventions(cfg: &HarnessConfig) -> Vec<InterventionSpec> {
    let mut scales = cfg.e2.capacities.clone();
    scales.extend(&cfg.e2.nrs_scales);
    scales.into_iter().map(InterventionSpec::capacity).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub arch: String,
    pub seed: u64,
    pub capacity: f64,
    pub per_step: f64,
    pub report_window: f64,
    pub conjunction: f64,
    pub gbi: f64,
    pub ignition_sharpness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrsRow {
    pub seed: u64,
    pub capacity: f64,
    /// `None` when a label class had too few samples.
    pub delta_nrs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2SeedResult {
    pub seed: u64,
    pub exclusions: Vec<Exclusion>,
    pub capacity: Vec<CapacityRow>,
    pub nrs: Vec<NrsRow>,
    /// (capacity, per-step mean cue signal)
    pub masking: Vec<(f64, Vec<f64>)>,
    pub cue_match_similarity: f64,
    pub cue_mask_similarity: f64,
    pub audit_t1_median: f64,
    pub audit_t3_decisions: usize,
    pub audit_t3_flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingSummary {
    pub capacity: f64,
    pub trace: Vec<f64>,
    pub first_negative: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2Summary {
    pub seeds: Vec<E2SeedResult>,
    /// (arch, capacity, mean conjunction, mean report window, mean per-step, mean GBI, mean IS)
    pub capacity_means: Vec<(String, f64, f64, f64, f64, f64, f64)>,
    /// (capacity, mean ΔNRS over seeds with a defined value, if any)
    pub nrs_means: Vec<(f64, Option<f64>)>,
    pub masking: Vec<MaskingSummary>,
    pub audit_t1_median: f64,
    pub audit_t3_flip_rate: f64,
    /// B1 seeds entering the capacity statistics.
    pub b1_seeds: Vec<u64>,
    /// Bootstrap 95% interval of the mean full-minus-half conjunction difference.
    pub conjunction_gap_ci: Option<(f64, f64)>,
}

impl E2Summary {
    pub fn conjunction(&self, arch: &str, capacity: f64) -> Option<f64> {
        self.capacity_means
            .iter()
            .find(|r| r.0 == arch && r.1 == capacity)
            .map(|r| r.2)
    }

    pub fn nrs(&self, capacity: f64) -> Option<f64> {
        self.nrs_means.iter().find(|r| r.0 == capacity).and_then(|r| r.1)
    }

    pub fn masking_at(&self, capacity: f64) -> Option<&MaskingSummary> {
        self.masking.iter().find(|m| m.capacity == capacity)
    }
}

fn accuracies(traces: &[EpisodeTrace]) -> (f64, f64, f64) {
    let (mut rep, mut rep_ok, mut dec, mut dec_ok, mut conj) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for t in traces {
        for r in &t.steps {
            if r.info.report.is_some() {
                let ok = r.is_correct() == Some(true);
                rep += 1;
                rep_ok += usize::from(ok);
                if r.info.decision_step {
                    dec += 1;
                    dec_ok += usize::from(ok);
                }
            }
        }
        conj += usize::from(t.conjunction_correct());
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(rep_ok, rep), frac(dec_ok, dec), frac(conj, traces.len()))
}

/// Features (carrier and slots after `NRS_STEP`) and object-parity labels.
fn nrs_samples(traces: &[EpisodeTrace]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut x = Vec::with_capacity(traces.len());
    let mut y = Vec::with_capacity(traces.len());
    for t in traces {
        let (EpisodeLabels::Dual { object, .. }, Some(r)) = (&t.labels, t.steps.get(NRS_STEP)) else {
            continue;
        };
        let mut f = r.carrier.clone();
        f.extend_from_slice(&r.slots);
        x.push(f);
        y.push(object % 2 == 1);
    }
    (x, y)
}

fn capacity_rows(dir: &RunDir, label: &str, agent: &Agent, seed: u64) -> Result<Vec<CapacityRow>, HarnessError> {
    let s = &dir.manifest.config.e2;
    let spec = EvalSpec {
        task: TaskKind::Dual,
        episodes: s.eval_episodes,
        seed,
    };
    let c = &agent.config;
    let mut rows = Vec::new();
    for &cap in &s.capacities {
        let traces = evaluate(agent, &spec, &InterventionSpec::capacity(cap))?;
        let (per_step, report_window, conjunction) = accuracies(&traces);
        let (gbi, is) = if agent.arch().has_workspace() {
            (trace_gbi(&traces, c.slots, c.slot_dim)?, trace_ignition(&traces))
        } else {
            (0.0, 0.0)
        };
        rows.push(CapacityRow {
            arch: label.to_string(),
            seed,
            capacity: cap,
            per_step,
            report_window,
            conjunction,
            gbi,
            ignition_sharpness: is,
        });
    }
    Ok(rows)
}

fn eval_seed(dir: &RunDir, seed: u64) -> Result<E2SeedResult, HarnessError> {
    let s = &dir.manifest.config.e2;
    let mut out = E2SeedResult {
        seed,
        exclusions: Vec::new(),
        capacity: Vec::new(),
        nrs: Vec::new(),
        masking: Vec::new(),
        cue_match_similarity: 0.0,
        cue_mask_similarity: 0.0,
        audit_t1_median: 0.0,
        audit_t3_decisions: 0,
        audit_t3_flip_rate: 0.0,
    };
    for plan in &dir.manifest.train_plans {
        let (agent, meta) = train_cached(&dir.root, plan, seed)?;
        out.exclusions.extend(Exclusion::check(&plan.label, seed, &meta, plan.train.gate));
        out.capacity.extend(capacity_rows(dir, &plan.label, &agent, seed)?);
        if agent.arch() != Arch::B1 {
            continue;
        }
        let nrs_spec = EvalSpec {
            task: TaskKind::Dual,
            episodes: s.nrs_episodes,
            seed: child_seed(seed, 0x4e52),
        };
        for &cap in &s.nrs_scales {
            let traces = evaluate(&agent, &nrs_spec, &InterventionSpec::capacity(cap))?;
            let (x, y) = nrs_samples(&traces);
            let mut rng = stream_rng(child_seed(seed, cap.to_bits()), STREAM_STATS);
            let value = match delta_nrs(&x, &y, &mut rng) {
                Ok(v) => Some(v),
                Err(MarkerError::ClassStarvation { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            out.nrs.push(NrsRow {
                seed,
                capacity: cap,
                delta_nrs: value,
            });
        }
        let reference = calibrate_cue_reference(&agent, s.masking_calibration_episodes, seed, PROBE_MASKS)?;
        out.cue_match_similarity = reference.match_similarity;
        out.cue_mask_similarity = reference.mask_similarity;
        for &cap in &s.capacities {
            let trace = cue_signal_trace(&agent, &reference, cap, s.masking_episodes, seed, PROBE_MASKS)?;
            out.masking.push((cap, trace));
        }
        let audit = bus_audit(
            &agent,
            &EvalSpec {
                task: TaskKind::Dual,
                episodes: s.audit_episodes,
                seed,
            },
        )?;
        out.audit_t1_median = audit.t1_median;
        out.audit_t3_decisions = audit.t3_decisions;
        out.audit_t3_flip_rate = audit.t3_flip_rate;
    }
    Ok(out)
}

#[derive(Serialize)]
struct CapacityCsv<'a> {
    manifest_hash: &'a str,
    arch: &'a str,
    seed: u64,
    excluded: bool,
    capacity: f64,
    per_step: f64,
    report_window: f64,
    conjunction: f64,
    gbi: f64,
    ignition_sharpness: f64,
}

#[derive(Serialize)]
struct GranularityCsv<'a> {
    manifest_hash: &'a str,
    arch: &'a str,
    seed: u64,
    excluded: bool,
    capacity: f64,
    granularity: &'a str,
    accuracy: f64,
}

#[derive(Serialize)]
struct MaskingCsv<'a> {
    manifest_hash: &'a str,
    seed: u64,
    capacity: f64,
    step: usize,
    signal: f64,
}

#[derive(Serialize)]
struct NrsCsv<'a> {
    manifest_hash: &'a str,
    seed: u64,
    excluded: bool,
    capacity: f64,
    delta_nrs: Option<f64>,
}

#[derive(Serialize)]
struct AuditCsv<'a> {
    manifest_hash: &'a str,
    seed: u64,
    t1_median_jacobian_norm: f64,
    t3_decisions: usize,
    t3_flip_rate: f64,
    cue_match_similarity: f64,
    cue_mask_similarity: f64,
}

type Metrics = Vec<(u64, String, f64)>;

fn excluded(s: &E2SeedResult, label: &str) -> bool {
    s.exclusions.iter().any(|e| e.label == label)
}

pub(crate) fn run(dir: &RunDir) -> Result<(ExperimentResult, Metrics), HarnessError> {
    let cfg = &dir.manifest.config;
    let seeds = dir.par_seeds(|seed| dir.cached(&format!("e2-s{seed}"), || eval_seed(dir, seed)))?;
    let h = dir.hash();

    let (mut cap_rows, mut gran_rows, mut mask_rows, mut nrs_rows, mut audit_rows) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in &seeds {
        for r in &s.capacity {
            let ex = excluded(s, &r.arch);
            cap_rows.push(CapacityCsv {
                manifest_hash: h,
                arch: &r.arch,
                seed: s.seed,
                excluded: ex,
                capacity: r.capacity,
                per_step: r.per_step,
                report_window: r.report_window,
                conjunction: r.conjunction,
                gbi: r.gbi,
                ignition_sharpness: r.ignition_sharpness,
            });
            for (g, acc) in [("per_step", r.per_step), ("report_window", r.report_window), ("conjunction", r.conjunction)] {
                gran_rows.push(GranularityCsv {
                    manifest_hash: h,
                    arch: &r.arch,
                    seed: s.seed,
                    excluded: ex,
                    capacity: r.capacity,
                    granularity: g,
                    accuracy: acc,
                });
            }
        }
        for (cap, trace) in &s.masking {
            for (t, v) in trace.iter().enumerate() {
                mask_rows.push(MaskingCsv {
                    manifest_hash: h,
                    seed: s.seed,
                    capacity: *cap,
                    step: t,
                    signal: *v,
                });
            }
        }
        for r in &s.nrs {
            nrs_rows.push(NrsCsv {
                manifest_hash: h,
                seed: s.seed,
                excluded: excluded(s, "B1"),
                capacity: r.capacity,
                delta_nrs: r.delta_nrs,
            });
        }
        audit_rows.push(AuditCsv {
            manifest_hash: h,
            seed: s.seed,
            t1_median_jacobian_norm: s.audit_t1_median,
            t3_decisions: s.audit_t3_decisions,
            t3_flip_rate: s.audit_t3_flip_rate,
            cue_match_similarity: s.cue_match_similarity,
            cue_mask_similarity: s.cue_mask_similarity,
        });
    }
    write_csv(&dir.path(OUTPUTS[0]), &cap_rows)?;
    write_csv(&dir.path(OUTPUTS[1]), &gran_rows)?;
    write_csv(&dir.path(OUTPUTS[2]), &mask_rows)?;
    write_csv(&dir.path(OUTPUTS[3]), &nrs_rows)?;
    write_csv(&dir.path(OUTPUTS[4]), &audit_rows)?;

    let exclusions: Vec<Exclusion> = seeds.iter().flat_map(|s| s.exclusions.clone()).collect();
    let b1: Vec<&E2SeedResult> = seeds.iter().filter(|s| !excluded(s, "B1")).collect();
    if b1.is_empty() {
        return Err(HarnessError::AllExcluded {
            experiment: dir.manifest.id.clone(),
            detail: exclusions.iter().map(|e| e.reason.clone()).collect::<Vec<_>>().join("; "),
        });
    }

    let mut capacity_means = Vec::new();
    for plan in &dir.manifest.train_plans {
        for &cap in &cfg.e2.capacities {
            let rows: Vec<&CapacityRow> = seeds
                .iter()
                .filter(|s| !excluded(s, &plan.label))
                .flat_map(|s| s.capacity.iter())
                .filter(|r| r.arch == plan.label && r.capacity == cap)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let m = |f: fn(&CapacityRow) -> f64| mean_of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            capacity_means.push((
                plan.label.clone(),
                cap,
                m(|r| r.conjunction),
                m(|r| r.report_window),
                m(|r| r.per_step),
                m(|r| r.gbi),
                m(|r| r.ignition_sharpness),
            ));
        }
    }
    let nrs_means = cfg
        .e2
        .nrs_scales
        .iter()
        .map(|&cap| {
            let v: Vec<f64> = b1
                .iter()
                .flat_map(|s| s.nrs.iter())
                .filter(|r| r.capacity == cap)
                .filter_map(|r| r.delta_nrs)
                .collect();
            (cap, (!v.is_empty()).then(|| mean_of(&v)))
        })
        .collect();
    let masking = cfg
        .e2
        .capacities
        .iter()
        .map(|&cap| {
            let traces: Vec<&Vec<f64>> = b1
                .iter()
                .flat_map(|s| s.masking.iter())
                .filter(|m| m.0 == cap)
                .map(|m| &m.1)
                .collect();
            let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
            let trace: Vec<f64> = (0..len)
                .map(|t| traces.iter().map(|tr| tr[t]).sum::<f64>() / traces.len() as f64)
                .collect();
            MaskingSummary {
                capacity: cap,
                first_negative: first_negative(&trace, 1),
                trace,
            }
        })
        .collect();

    let conj = |cap: f64| -> Vec<f64> {
        b1.iter()
            .filter_map(|s| s.capacity.iter().find(|r| r.arch == "B1" && r.capacity == cap))
            .map(|r| r.conjunction)
            .collect()
    };
    let stat_seed = child_seed(cfg.base_seed, STREAM_STATS);
    let mut stats = Vec::new();
    let (full, half) = (conj(1.0), conj(0.5));
    let mut gap_ci = None;
    if full.len() >= 2 && half.len() == full.len() {
        stats.push(NamedStat::compare(
            "b1_conjunction_full_vs_half",
            &full,
            &half,
            cfg.e2.permutations,
            stat_seed,
        )?);
        let diffs: Vec<f64> = full.iter().zip(&half).map(|(a, b)| a - b).collect();
        gap_ci = bootstrap_ci(&diffs, mean_of, 10_000, 0.95, stat_seed).ok();
    }

    let markers = seeds
        .iter()
        .flat_map(|s| {
            s.capacity.iter().map(move |r| MarkerReport {
                seed: s.seed,
                condition: format!("{}@{}", r.arch, r.capacity),
                gbi: r.gbi,
                ignition_sharpness: r.ignition_sharpness,
                delta_nrs: s
                    .nrs
                    .iter()
                    .find(|n| r.arch == "B1" && n.capacity == r.capacity)
                    .and_then(|n| n.delta_nrs),
                per_step: r.per_step,
                report_window: r.report_window,
                conjunction: r.conjunction,
                ..MarkerReport::default()
            })
        })
        .collect();
    let mut metrics = Metrics::new();
    for s in &seeds {
        for r in &s.capacity {
            metrics.push((s.seed, format!("{}@{}/conjunction", r.arch, r.capacity), r.conjunction));
            metrics.push((s.seed, format!("{}@{}/gbi", r.arch, r.capacity), r.gbi));
        }
        for r in &s.nrs {
            if let Some(v) = r.delta_nrs {
                metrics.push((s.seed, format!("B1@{}/delta_nrs", r.capacity), v));
            }
        }
        metrics.push((s.seed, "B1/t3_flip_rate".into(), s.audit_t3_flip_rate));
    }
    let summary = E2Summary {
        capacity_means,
        nrs_means,
        masking,
        audit_t1_median: mean_of(&b1.iter().map(|s| s.audit_t1_median).collect::<Vec<_>>()),
        audit_t3_flip_rate: mean_of(&b1.iter().map(|s| s.audit_t3_flip_rate).collect::<Vec<_>>()),
        b1_seeds: b1.iter().map(|s| s.seed).collect(),
        conjunction_gap_ci: gap_ci,
        seeds,
    };
    let result = ExperimentResult {
        id: dir.manifest.id.clone(),
        experiment: dir.manifest.experiment,
        manifest_hash: h.to_string(),
        seeds: dir.manifest.seeds.clone(),
        markers,
        stats,
        exclusions,
        figures: OUTPUTS.iter().map(|s| s.to_string()).collect(),
        details: ExperimentDetails::E2(summary),
    };
    Ok((result, metrics))
}

/// Runs E2 with `config` into `out`.
pub fn run_e2(config: HarnessConfig, out: &std::path::Path) -> Result<ExperimentResult, HarnessError> {
    let manifest = super::RunManifest::new(super::Experiment::E2, config, false);
    super::run_experiment(&manifest, out)
}
