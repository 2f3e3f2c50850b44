//! Metacognition: B2 trained on post-decision wagering with its policy on the
//! workspace, evaluated intact and with the self-latent lesioned (zero,
//! matched noise, cross-trial permutation) without rewiring, plus the
//! bus-off control with the self-model intact.

use serde::{Deserialize, Serialize};

use super::manifest::TrainPlan;
use super::run::{mean_of, sd_of, train_cached, write_csv, Exclusion, ExperimentDetails, ExperimentResult, NamedStat, RunDir};
use super::{HarnessConfig, HarnessError};
use crate::agents::{uncertainty_scalars, Agent, AgentConfig, Arch, EpisodeTrace, Routing};
use crate::envs::TaskKind;
use crate::interventions::{evaluate, EvalSpec, InterventionKind, InterventionSpec};
use crate::markers::{
    aurc, auroc_type2, calibration_curve, effective_dim, pca_probe_baseline, probe_auroc, roc_curve, MarkerReport,
};
use crate::rng::{child_seed, stream_rng, STREAM_STATS};
use crate::training::TrainConfig;

pub(crate) const OUTPUTS: &[&str] = &[
    "e1_accuracy.csv",
    "e1_roc.csv",
    "e1_calibration.csv",
    "e1_selective.csv",
    "e1_probes.csv",
];

const CONDITIONS: [(&str, InterventionKind); 5] = [
    ("intact", InterventionKind::None),
    ("zero", InterventionKind::SelfLesionZero),
    ("noise", InterventionKind::SelfBlindNoise),
    ("permute", InterventionKind::SelfBlindPermute),
    ("bus_off", InterventionKind::CapacityScale),
];

pub(crate) fn plans(cfg: &HarnessConfig) -> Vec<TrainPlan> {
    let s = &cfg.e1;
    vec![TrainPlan {
        label: "B2".into(),
        agent: AgentConfig::new(Arch::B2).with_routing(Routing::Workspace),
        task: TaskKind::Wagering,
        train: TrainConfig {
            episodes: s.train_episodes,
            validation_episodes: s.validation_episodes,
            gate: cfg.gate,
            ..TrainConfig::e1(0)
        },
    }]
}

fn spec_for(kind: InterventionKind, stream: u64) -> InterventionSpec {
    let mut iv = InterventionSpec::of(kind);
    if kind == InterventionKind::CapacityScale {
        iv.capacity_scale = 0.0;
    }
    iv.stream = stream;
    iv
}

pub(crate) fn interventions() -> Vec<InterventionSpec> {
    CONDITIONS.iter().enumerate().map(|(i, (_, k))| spec_for(*k, i as u64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E1Condition {
    pub condition: String,
    pub accuracy: f64,
    /// `None` when every trial had the same correctness.
    pub auroc: Option<f64>,
    pub aurc: f64,
    pub mean_confidence: f64,
    pub sd_confidence: f64,
    /// Fraction of wager trials on which the agent opted out.
    pub skip_fraction: f64,
    pub trials: usize,
}

impl E1Condition {
    pub fn auroc_imputed(&self) -> f64 {
        self.auroc.unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E1SeedResult {
    pub seed: u64,
    pub exclusion: Option<Exclusion>,
    pub conditions: Vec<E1Condition>,
    pub roc: Vec<(String, f64, f64)>,
    pub calibration: Vec<(String, crate::markers::CalibrationBin)>,
    pub selective: Vec<(String, f64, f64)>,
    pub eff_dim: Option<f64>,
    pub pca_dim: Option<usize>,
    pub self_probe_auroc: Option<f64>,
    pub pca_probe_auroc: Option<f64>,
}

impl E1SeedResult {
    pub fn condition(&self, name: &str) -> Option<&E1Condition> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E1Summary {
    pub seeds: Vec<E1SeedResult>,
    /// Condition -> (mean accuracy, mean imputed AUROC, mean skip fraction) over included seeds.
    pub means: Vec<(String, f64, f64, f64)>,
    pub accuracy_gap_pp: f64,
    pub mean_eff_dim: Option<f64>,
    pub mean_probe_advantage: Option<f64>,
}

impl E1Summary {
    pub fn included(&self) -> impl Iterator<Item = &E1SeedResult> {
        self.seeds.iter().filter(|s| s.exclusion.is_none())
    }

    pub fn mean(&self, condition: &str) -> Option<(f64, f64, f64)> {
        self.means.iter().find(|m| m.0 == condition).map(|m| (m.1, m.2, m.3))
    }
}

/// Decision confidence and correctness per trial.
fn trials(traces: &[EpisodeTrace]) -> (Vec<f64>, Vec<bool>) {
    let mut conf = Vec::with_capacity(traces.len());
    let mut ok = Vec::with_capacity(traces.len());
    for t in traces {
        if let Some(r) = t.steps.iter().find(|r| r.info.decision_step) {
            conf.push(r.confidence.unwrap_or(0.5));
            ok.push(r.is_correct() == Some(true));
        }
    }
    (conf, ok)
}

fn skip_fraction(traces: &[EpisodeTrace]) -> f64 {
    let mut wagers = 0usize;
    let mut skips = 0usize;
    for t in traces {
        if t.wager().is_none() {
            continue;
        }
        wagers += 1;
        let conf = t.steps.iter().find(|r| r.info.decision_step).and_then(|r| r.confidence);
        if conf.is_none_or(|c| c <= 0.5) {
            skips += 1;
        }
    }
    if wagers == 0 {
        0.0
    } else {
        skips as f64 / wagers as f64
    }
}

/// Coverage and selective accuracy when keeping the most confident trials.
fn selective_curve(conf: &[f64], ok: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    let n = conf.len() as f64;
    let mut hits = 0usize;
    order
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            hits += usize::from(ok[j]);
            ((i + 1) as f64 / n, hits as f64 / (i + 1) as f64)
        })
        .collect()
}

/// Features the self-model compresses: carrier, read slots, draft logits
/// and the two uncertainty scalars at the decision step.
fn self_inputs(traces: &[EpisodeTrace]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut feats = Vec::new();
    let mut latents = Vec::new();
    for t in traces {
        if let Some(r) = t.steps.iter().find(|r| r.info.decision_step) {
            let (ent, margin) = uncertainty_scalars(&r.draft);
            let mut f = r.carrier.clone();
            f.extend_from_slice(&r.read_slots);
            f.extend_from_slice(&r.draft);
            f.extend([ent, margin]);
            feats.push(f);
            latents.push(r.z_self.clone().unwrap_or_default());
        }
    }
    (feats, latents)
}

fn eval_seed(dir: &RunDir, plan: &TrainPlan, seed: u64) -> Result<E1SeedResult, HarnessError> {
    let s = &dir.manifest.config.e1;
    let (agent, meta) = train_cached(&dir.root, plan, seed)?;
    let exclusion = Exclusion::check(&plan.label, seed, &meta, plan.train.gate);
    let spec = EvalSpec {
        task: TaskKind::Wagering,
        episodes: s.eval_episodes,
        seed,
    };
    let mut out = E1SeedResult {
        seed,
        exclusion,
        conditions: Vec::new(),
        roc: Vec::new(),
        calibration: Vec::new(),
        selective: Vec::new(),
        eff_dim: None,
        pca_dim: None,
        self_probe_auroc: None,
        pca_probe_auroc: None,
    };
    for (i, (name, kind)) in CONDITIONS.iter().enumerate() {
        let traces = evaluate(&agent, &spec, &spec_for(*kind, i as u64))?;
        let (conf, ok) = trials(&traces);
        let acc = ok.iter().filter(|c| **c).count() as f64 / ok.len().max(1) as f64;
        out.conditions.push(E1Condition {
            condition: name.to_string(),
            accuracy: acc,
            auroc: auroc_type2(&conf, &ok)?,
            aurc: aurc(&conf, &ok)?,
            mean_confidence: mean_of(&conf),
            sd_confidence: sd_of(&conf),
            skip_fraction: skip_fraction(&traces),
            trials: ok.len(),
        });
        out.roc.extend(roc_curve(&conf, &ok).into_iter().map(|(f, t)| (name.to_string(), f, t)));
        out.calibration.extend(
            calibration_curve(&conf, &ok, s.calibration_bins)?
                .into_iter()
                .map(|b| (name.to_string(), b)),
        );
        out.selective.extend(selective_curve(&conf, &ok).into_iter().map(|(c, a)| (name.to_string(), c, a)));
        if *kind == InterventionKind::None {
            probes(&agent, &traces, &ok, seed, &mut out);
        }
    }
    Ok(out)
}

fn probes(agent: &Agent, traces: &[EpisodeTrace], ok: &[bool], seed: u64, out: &mut E1SeedResult) {
    if !agent.arch().has_self_model() {
        return;
    }
    let (feats, latents) = self_inputs(traces);
    out.eff_dim = effective_dim(&latents).ok();
    let Some(ed) = out.eff_dim else { return };
    let k = (ed.round() as usize).clamp(1, feats.first().map_or(1, Vec::len));
    out.pca_dim = Some(k);
    out.self_probe_auroc = probe_auroc(&latents, ok, &mut stream_rng(seed, STREAM_STATS)).ok();
    out.pca_probe_auroc = pca_probe_baseline(&feats, ok, k, &mut stream_rng(seed, STREAM_STATS)).ok();
}

#[derive(Serialize)]
struct AccuracyRow<'a> {
    manifest_hash: &'a str,
    seed: u64,
    excluded: bool,
    condition: &'a str,
    accuracy: f64,
    auroc_t2: Option<f64>,
    auroc_t2_imputed: f64,
    aurc: f64,
    mean_confidence: f64,
    sd_confidence: f64,
    skip_fraction: f64,
    trials: usize,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    manifest_hash: &'a str,
    seed: u64,
    condition: &'a str,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct CalibrationRow<'a> {
    manifest_hash: &'a str,
    seed: u64,
    condition: &'a str,
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
    mean_confidence: Option<f64>,
    accuracy: Option<f64>,
}

#[derive(Serialize)]
struct ProbeRow<'a> {
    manifest_hash: &'a str,
    seed: u64,
    eff_dim: Option<f64>,
    pca_dim: Option<usize>,
    self_probe_auroc: Option<f64>,
    pca_probe_auroc: Option<f64>,
}

type Metrics = Vec<(u64, String, f64)>;

pub(crate) fn run(dir: &RunDir) -> Result<(ExperimentResult, Metrics), HarnessError> {
    let plan = &dir.manifest.train_plans[0];
    let seeds = dir.par_seeds(|seed| dir.cached(&format!("e1-s{seed}"), || eval_seed(dir, plan, seed)))?;
    let h = dir.hash();

    let mut acc_rows = Vec::new();
    let (mut roc_rows, mut sel_rows, mut cal_rows, mut probe_rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in &seeds {
        for c in &s.conditions {
            acc_rows.push(AccuracyRow {
                manifest_hash: h,
                seed: s.seed,
                excluded: s.exclusion.is_some(),
                condition: &c.condition,
                accuracy: c.accuracy,
                auroc_t2: c.auroc,
                auroc_t2_imputed: c.auroc_imputed(),
                aurc: c.aurc,
                mean_confidence: c.mean_confidence,
                sd_confidence: c.sd_confidence,
                skip_fraction: c.skip_fraction,
                trials: c.trials,
            });
        }
        for (c, x, y) in &s.roc {
            roc_rows.push(CurveRow { manifest_hash: h, seed: s.seed, condition: c, x: *x, y: *y });
        }
        for (c, x, y) in &s.selective {
            sel_rows.push(CurveRow { manifest_hash: h, seed: s.seed, condition: c, x: *x, y: *y });
        }
        for (c, b) in &s.calibration {
            cal_rows.push(CalibrationRow {
                manifest_hash: h,
                seed: s.seed,
                condition: c,
                bin_lo: b.lo,
                bin_hi: b.hi,
                count: b.count,
                mean_confidence: b.mean_confidence,
                accuracy: b.accuracy,
            });
        }
        probe_rows.push(ProbeRow {
            manifest_hash: h,
            seed: s.seed,
            eff_dim: s.eff_dim,
            pca_dim: s.pca_dim,
            self_probe_auroc: s.self_probe_auroc,
            pca_probe_auroc: s.pca_probe_auroc,
        });
    }
    write_csv(&dir.path(OUTPUTS[0]), &acc_rows)?;
    write_csv(&dir.path(OUTPUTS[1]), &roc_rows)?;
    write_csv(&dir.path(OUTPUTS[2]), &cal_rows)?;
    write_csv(&dir.path(OUTPUTS[3]), &sel_rows)?;
    write_csv(&dir.path(OUTPUTS[4]), &probe_rows)?;

    let exclusions: Vec<Exclusion> = seeds.iter().filter_map(|s| s.exclusion.clone()).collect();
    let included: Vec<&E1SeedResult> = seeds.iter().filter(|s| s.exclusion.is_none()).collect();
    if included.is_empty() {
        return Err(HarnessError::AllExcluded {
            experiment: dir.manifest.id.clone(),
            detail: exclusions.iter().map(|e| e.reason.clone()).collect::<Vec<_>>().join("; "),
        });
    }
    let column = |cond: &str, f: &dyn Fn(&E1Condition) -> f64| -> Vec<f64> {
        included.iter().filter_map(|s| s.condition(cond).map(f)).collect()
    };
    let means: Vec<(String, f64, f64, f64)> = CONDITIONS
        .iter()
        .map(|(c, _)| {
            (
                c.to_string(),
                mean_of(&column(c, &|x| x.accuracy)),
                mean_of(&column(c, &|x| x.auroc_imputed())),
                mean_of(&column(c, &|x| x.skip_fraction)),
            )
        })
        .collect();
    let gap = 100.0 * (means[0].1 - means[1].1);

    let mut stats = Vec::new();
    if included.len() >= 2 {
        let n_perm = dir.manifest.config.e2.permutations;
        let stat_seed = child_seed(dir.manifest.config.base_seed, STREAM_STATS);
        for (name, f) in [
            ("auroc_intact_vs_zero", &(|x: &E1Condition| x.auroc_imputed()) as &dyn Fn(&E1Condition) -> f64),
            ("accuracy_intact_vs_zero", &|x: &E1Condition| x.accuracy),
        ] {
            stats.push(NamedStat::compare(name, &column("intact", f), &column("zero", f), n_perm, stat_seed)?);
        }
    }

    let eff: Vec<f64> = included.iter().filter_map(|s| s.eff_dim).collect();
    let adv: Vec<f64> = included
        .iter()
        .filter_map(|s| Some(s.self_probe_auroc? - s.pca_probe_auroc?))
        .collect();
    let markers: Vec<MarkerReport> = seeds
        .iter()
        .flat_map(|s| {
            s.conditions.iter().map(move |c| MarkerReport {
                seed: s.seed,
                condition: c.condition.clone(),
                auroc_t2: c.auroc,
                aurc: Some(c.aurc),
                report_window: c.accuracy,
                eff_dim: s.eff_dim,
                ..MarkerReport::default()
            })
        })
        .collect();
    let mut metrics = Metrics::new();
    for s in &seeds {
        for c in &s.conditions {
            metrics.push((s.seed, format!("{}/accuracy", c.condition), c.accuracy));
            metrics.push((s.seed, format!("{}/auroc_t2", c.condition), c.auroc_imputed()));
            metrics.push((s.seed, format!("{}/skip_fraction", c.condition), c.skip_fraction));
        }
    }
    let summary = E1Summary {
        means,
        accuracy_gap_pp: gap,
        mean_eff_dim: (!eff.is_empty()).then(|| mean_of(&eff)),
        mean_probe_advantage: (!adv.is_empty()).then(|| mean_of(&adv)),
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
        details: ExperimentDetails::E1(summary),
    };
    Ok((result, metrics))
}

/// Runs E1 with `config` into `out`.
pub fn run_e1(config: HarnessConfig, out: &std::path::Path) -> Result<ExperimentResult, HarnessError> {
    let manifest = super::RunManifest::new(super::Experiment::E1, config, false);
    super::run_experiment(&manifest, out)
}
