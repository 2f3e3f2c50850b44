//! Noise titration and marker triangulation across architectures: L75 under
//! slot or carrier noise, raw PCI-A, GBI, Type-2 AUROC, the ID-minus-OOD
//! accuracy gap, sequential regression of the gap on the markers, and
//! z-scored composites.

use serde::{Deserialize, Serialize};

use super::config::Variant;
use super::manifest::TrainPlan;
use super::run::{mean_of, sd_of, train_cached, write_csv, Exclusion, ExperimentDetails, ExperimentResult, RunDir};
use super::{E3Settings, HarnessConfig, HarnessError};
use crate::agents::{Agent, AgentConfig, Arch, EpisodeTrace, Routing};
use crate::envs::{CueWiring, TaskKind};
use crate::interventions::{decision_accuracy, evaluate, EvalSpec, InterventionSpec};
use crate::markers::{
    aurc, auroc_type2, delta_pci, l75, pci_a, pci_trials, trace_gbi, trace_ignition, MarkerError, MarkerReport, L75,
};
use crate::stats::{composite_cts, hierarchical_r2, loo_r, pearson_r, RegressionStage};
use crate::training::TrainConfig;

pub(crate) const OUTPUTS: &[&str] = &[
    "e3_titration.csv",
    "e3_l75.csv",
    "e3_pci.csv",
    "e3_markers.csv",
    "e3_regression.csv",
    "e3_composites.csv",
];

/// Slot-noise augmentation for the steelman B1 variant.
pub const AUGMENTATION_SIGMA: f64 = 0.04;
pub const REG_DROPOUT: f64 = 0.1;
pub const REG_WEIGHT_DECAY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSite {
    Slots,
    Carrier,
}

/// Agent and training configuration of an E3 variant.
pub fn e3_variant_config(v: Variant, episodes: usize) -> (AgentConfig, TrainConfig) {
    let mut train = TrainConfig {
        episodes,
        ..TrainConfig::e3(0)
    };
    let agent = match v {
        Variant::B1 => AgentConfig::new(Arch::B1),
        Variant::B1Reg => {
            train.weight_decay = REG_WEIGHT_DECAY;
            AgentConfig {
                dropout: REG_DROPOUT,
                ..AgentConfig::new(Arch::B1)
            }
        }
        Variant::B1Aug => {
            train.slot_noise_aug = AUGMENTATION_SIGMA;
            AgentConfig::new(Arch::B1)
        }
        Variant::B2 => AgentConfig::new(Arch::B2),
        Variant::B2WsRead => AgentConfig::new(Arch::B2).with_routing(Routing::Workspace),
        Variant::BcLinear => AgentConfig::new(Arch::BcLinear),
        Variant::BcMlp => AgentConfig::new(Arch::BcMlp),
        Variant::BcRandproj => AgentConfig::new(Arch::BcRandproj),
        Variant::HotOnly => AgentConfig::new(Arch::HotOnly).with_wiring(CueWiring::Trunk),
        // Same strong-lesion baselines as E2: cues reach neither pathway.
        Variant::A1 => AgentConfig::new(Arch::A1).with_wiring(CueWiring::Dropped),
        Variant::A0 => AgentConfig::new(Arch::A0).with_wiring(CueWiring::Dropped),
    };
    (agent, train)
}

pub(crate) fn plans(cfg: &HarnessConfig) -> Vec<TrainPlan> {
    cfg.e3
        .variants
        .iter()
        .map(|&v| {
            let (agent, mut train) = e3_variant_config(v, cfg.e3.train_episodes);
            train.validation_episodes = cfg.e3.validation_episodes;
            train.gate = cfg.gate;
            TrainPlan {
                label: v.id().to_string(),
                agent,
                task: TaskKind::Dual,
                train,
            }
        })
        .collect()
}

pub(crate) fn interventions(cfg: &HarnessConfig) -> Vec<InterventionSpec> {
    let grid = &cfg.e3.sigma_grid;
    let slot = grid.iter().enumerate().map(|(i, &s)| InterventionSpec {
        stream: i as u64,
        ..InterventionSpec::slot_noise(s)
    });
    let hidden = grid.iter().enumerate().map(|(i, &s)| InterventionSpec {
        stream: (grid.len() + i) as u64,
        ..InterventionSpec::hidden_noise(s)
    });
    slot.chain(hidden).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitrationCurve {
    pub site: NoiseSite,
    pub points: Vec<(f64, f64)>,
    /// Number, `ABOVE_RANGE` or `BELOW_BASELINE`.
    pub l75: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E3Row {
    pub variant: Variant,
    pub seed: u64,
    pub exclusion: Option<Exclusion>,
    pub report: MarkerReport,
    pub curves: Vec<TitrationCurve>,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
}

impl E3Row {
    pub fn curve(&self, site: NoiseSite) -> Option<&TitrationCurve> {
        self.curves.iter().find(|c| c.site == site)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L75Summary {
    pub variant: Variant,
    pub site: NoiseSite,
    pub seeds: usize,
    pub above_range: usize,
    /// Seeds already under 75% accuracy without noise.
    pub below_baseline: usize,
    /// Mean over seeds with a numeric L75.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Mean accuracy at the largest grid sigma.
    pub accuracy_at_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PciSummary {
    pub variant: Variant,
    pub seeds: usize,
    pub mean: Option<f64>,
    pub sd: f64,
    pub delta_pci_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E3Summary {
    pub rows: Vec<E3Row>,
    pub l75: Vec<L75Summary>,
    pub pci: Vec<PciSummary>,
    /// Outcome: ood_gap; predictors in order gbi, delta_pci, auroc_t2.
    pub regression: Vec<RegressionStage>,
    pub regression_n: usize,
    /// Reduced composite (GBI + ΔPCI) correlation with the gap.
    pub reduced_composite_r: Option<f64>,
    pub full_composite_r: Option<f64>,
    pub marker_r: Vec<(String, Option<f64>)>,
    pub loo_r: Option<f64>,
    pub dropped_markers: Vec<String>,
}

impl E3Summary {
    pub fn l75_for(&self, v: Variant, site: NoiseSite) -> Option<&L75Summary> {
        self.l75.iter().find(|s| s.variant == v && s.site == site)
    }

    pub fn pci_for(&self, v: Variant) -> Option<&PciSummary> {
        self.pci.iter().find(|s| s.variant == v)
    }
}

fn l75_label(curve: &[(f64, f64)]) -> Result<String, HarnessError> {
    match l75(curve) {
        Ok(v) => Ok(v.to_string()),
        Err(MarkerError::BelowBaseline(_)) => Ok("BELOW_BASELINE".into()),
        Err(e) => Err(e.into()),
    }
}

fn titrate(s: &E3Settings, agent: &Agent, site: NoiseSite, seed: u64) -> Result<TitrationCurve, HarnessError> {
    let spec = EvalSpec {
        task: TaskKind::Dual,
        episodes: s.episodes_per_level,
        seed,
    };
    let mut points = Vec::with_capacity(s.sigma_grid.len());
    for (i, &sigma) in s.sigma_grid.iter().enumerate() {
        let iv = match site {
            NoiseSite::Slots => InterventionSpec {
                stream: i as u64,
                ..InterventionSpec::slot_noise(sigma)
            },
            NoiseSite::Carrier => InterventionSpec {
                stream: (s.sigma_grid.len() + i) as u64,
                ..InterventionSpec::hidden_noise(sigma)
            },
        };
        points.push((sigma, decision_accuracy(&evaluate(agent, &spec, &iv)?)));
    }
    Ok(TitrationCurve {
        site,
        l75: l75_label(&points)?,
        points,
    })
}

fn decision_trials(traces: &[EpisodeTrace]) -> (Vec<f64>, Vec<bool>) {
    let mut conf = Vec::new();
    let mut ok = Vec::new();
    for r in traces.iter().flat_map(|t| t.steps.iter()).filter(|r| r.info.decision_step) {
        if let Some(c) = r.confidence {
            conf.push(c);
            ok.push(r.is_correct() == Some(true));
        }
    }
    (conf, ok)
}

/// Every E3 measurement of one trained agent: markers, titration curves,
/// and ID and held-out decision accuracy.
pub struct AgentMeasurement {
    pub report: MarkerReport,
    pub curves: Vec<TitrationCurve>,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
}

pub fn measure_agent(agent: &Agent, s: &E3Settings, seed: u64, condition: &str) -> Result<AgentMeasurement, HarnessError> {
    let arch = agent.arch();
    let c = &agent.config;
    let spec = |task, episodes| EvalSpec { task, episodes, seed };

    let intact = evaluate(agent, &spec(TaskKind::Dual, s.marker_episodes), &InterventionSpec::none())?;
    let (per_step, report_window, conjunction) = {
        let (mut rep, mut rep_ok, mut dec, mut dec_ok) = (0usize, 0usize, 0usize, 0usize);
        for r in intact.iter().flat_map(|t| t.steps.iter()).filter(|r| r.info.report.is_some()) {
            let ok = r.is_correct() == Some(true);
            rep += 1;
            rep_ok += usize::from(ok);
            if r.info.decision_step {
                dec += 1;
                dec_ok += usize::from(ok);
            }
        }
        let conj = intact.iter().filter(|t| t.conjunction_correct()).count();
        (
            rep_ok as f64 / rep.max(1) as f64,
            dec_ok as f64 / dec.max(1) as f64,
            conj as f64 / intact.len().max(1) as f64,
        )
    };
    let (gbi, is) = if arch.has_workspace() {
        (trace_gbi(&intact, c.slots, c.slot_dim)?, trace_ignition(&intact))
    } else {
        (0.0, 0.0)
    };
    let (conf, ok) = decision_trials(&intact);
    let (auroc, risk) = if conf.is_empty() {
        (None, None)
    } else {
        (auroc_type2(&conf, &ok)?, Some(aurc(&conf, &ok)?))
    };

    let id_accuracy = decision_accuracy(&evaluate(agent, &spec(TaskKind::Dual, s.ood_episodes), &InterventionSpec::none())?);
    let ood_accuracy = decision_accuracy(&evaluate(
        agent,
        &spec(TaskKind::DualHeldOut, s.ood_episodes),
        &InterventionSpec::none(),
    )?);

    let trials = pci_trials(agent, &spec(TaskKind::Dual, s.marker_episodes), &s.pulse)?;
    let pcis: Vec<f64> = trials.iter().map(|t| t.pci).collect();
    let correct: Vec<bool> = trials.iter().map(|t| t.correct).collect();

    let mut curves = Vec::new();
    if arch.has_workspace() {
        curves.push(titrate(s, agent, NoiseSite::Slots, seed)?);
    }
    if arch.is_recurrent() {
        curves.push(titrate(s, agent, NoiseSite::Carrier, seed)?);
    }
    let primary = curves.first().map(|c| c.l75.clone()).unwrap_or_default();

    Ok(AgentMeasurement {
        report: MarkerReport {
            seed,
            condition: condition.to_string(),
            gbi,
            ignition_sharpness: is,
            auroc_t2: auroc,
            aurc: risk,
            pci_a: Some(pci_a(&trials)),
            delta_pci: delta_pci(&pcis, &correct),
            delta_nrs: None,
            l75: primary,
            per_step,
            report_window,
            conjunction,
            ood_gap: Some(id_accuracy - ood_accuracy),
            eff_dim: None,
        },
        curves,
        id_accuracy,
        ood_accuracy,
    })
}

fn eval_variant(dir: &RunDir, plan: &TrainPlan, variant: Variant, seed: u64) -> Result<E3Row, HarnessError> {
    let (agent, meta) = train_cached(&dir.root, plan, seed)?;
    let m = measure_agent(&agent, &dir.manifest.config.e3, seed, variant.id())?;
    Ok(E3Row {
        variant,
        seed,
        exclusion: Exclusion::check(&plan.label, seed, &meta, plan.train.gate),
        report: m.report,
        curves: m.curves,
        id_accuracy: m.id_accuracy,
        ood_accuracy: m.ood_accuracy,
    })
}

#[derive(Serialize)]
struct TitrationCsv<'a> {
    manifest_hash: &'a str,
    variant: &'a str,
    seed: u64,
    excluded: bool,
    site: NoiseSite,
    sigma: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct L75Csv<'a> {
    manifest_hash: &'a str,
    variant: &'a str,
    seed: u64,
    excluded: bool,
    site: NoiseSite,
    l75: &'a str,
}

#[derive(Serialize)]
struct PciCsv<'a> {
    manifest_hash: &'a str,
    variant: &'a str,
    seeds: usize,
    pci_a_mean: Option<f64>,
    pci_a_sd: f64,
    delta_pci_mean: Option<f64>,
}

#[derive(Serialize)]
struct MarkerCsv<'a> {
    manifest_hash: &'a str,
    excluded: bool,
    seed: u64,
    condition: &'a str,
    gbi: f64,
    ignition_sharpness: f64,
    auroc_t2: Option<f64>,
    aurc: Option<f64>,
    pci_a: Option<f64>,
    delta_pci: Option<f64>,
    l75: &'a str,
    per_step: f64,
    report_window: f64,
    conjunction: f64,
    id_accuracy: f64,
    ood_accuracy: f64,
    ood_gap: Option<f64>,
}

#[derive(Serialize)]
struct RegressionCsv<'a> {
    manifest_hash: &'a str,
    n: usize,
    stage: usize,
    added: &'a str,
    r2: f64,
    delta_r2: f64,
    condition_number: Option<f64>,
    collinear: bool,
}

#[derive(Serialize)]
struct CompositeCsv<'a> {
    manifest_hash: &'a str,
    variant: &'a str,
    seed: u64,
    gbi: f64,
    delta_pci: f64,
    auroc_t2: f64,
    reduced: f64,
    full: f64,
    ood_gap: f64,
}

type Metrics = Vec<(u64, String, f64)>;

pub(crate) fn run(dir: &RunDir) -> Result<(ExperimentResult, Metrics), HarnessError> {
    let cfg = &dir.manifest.config.e3;
    let h = dir.hash();
    let per_seed = dir.par_seeds(|seed| {
        dir.manifest
            .train_plans
            .iter()
            .zip(&cfg.variants)
            .map(|(plan, &v)| dir.cached(&format!("e3-{}-s{seed}", v.id()), || eval_variant(dir, plan, v, seed)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    // Variant-major order for output.
    let mut rows: Vec<E3Row> = per_seed.into_iter().flatten().collect();
    let order = |v: Variant| cfg.variants.iter().position(|x| *x == v).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (order(r.variant), r.seed));

    let mut tit = Vec::new();
    let mut l75_rows = Vec::new();
    let mut marker_rows = Vec::new();
    for r in &rows {
        let ex = r.exclusion.is_some();
        for c in &r.curves {
            for &(sigma, accuracy) in &c.points {
                tit.push(TitrationCsv {
                    manifest_hash: h,
                    variant: r.variant.id(),
                    seed: r.seed,
                    excluded: ex,
                    site: c.site,
                    sigma,
                    accuracy,
                });
            }
            l75_rows.push(L75Csv {
                manifest_hash: h,
                variant: r.variant.id(),
                seed: r.seed,
                excluded: ex,
                site: c.site,
                l75: &c.l75,
            });
        }
        let m = &r.report;
        marker_rows.push(MarkerCsv {
            manifest_hash: h,
            excluded: ex,
            seed: r.seed,
            condition: &m.condition,
            gbi: m.gbi,
            ignition_sharpness: m.ignition_sharpness,
            auroc_t2: m.auroc_t2,
            aurc: m.aurc,
            pci_a: m.pci_a,
            delta_pci: m.delta_pci,
            l75: &m.l75,
            per_step: m.per_step,
            report_window: m.report_window,
            conjunction: m.conjunction,
            id_accuracy: r.id_accuracy,
            ood_accuracy: r.ood_accuracy,
            ood_gap: m.ood_gap,
        });
    }
    write_csv(&dir.path(OUTPUTS[0]), &tit)?;
    write_csv(&dir.path(OUTPUTS[1]), &l75_rows)?;
    write_csv(&dir.path(OUTPUTS[3]), &marker_rows)?;

    let exclusions: Vec<Exclusion> = rows.iter().filter_map(|r| r.exclusion.clone()).collect();
    let included: Vec<&E3Row> = rows.iter().filter(|r| r.exclusion.is_none()).collect();
    if included.is_empty() {
        return Err(HarnessError::AllExcluded {
            experiment: dir.manifest.id.clone(),
            detail: exclusions.iter().map(|e| e.reason.clone()).collect::<Vec<_>>().join("; "),
        });
    }

    let mut l75s = Vec::new();
    let mut pci = Vec::new();
    for &v in &cfg.variants {
        let vr: Vec<&&E3Row> = included.iter().filter(|r| r.variant == v).collect();
        if vr.is_empty() {
            continue;
        }
        for site in [NoiseSite::Slots, NoiseSite::Carrier] {
            let curves: Vec<&TitrationCurve> = vr.iter().filter_map(|r| r.curve(site)).collect();
            if curves.is_empty() {
                continue;
            }
            let values: Vec<f64> = curves.iter().filter_map(|c| c.l75.parse::<f64>().ok()).collect();
            l75s.push(L75Summary {
                variant: v,
                site,
                seeds: curves.len(),
                above_range: curves.iter().filter(|c| c.l75 == L75::AboveRange.to_string()).count(),
                below_baseline: curves.iter().filter(|c| c.l75 == "BELOW_BASELINE").count(),
                mean: (!values.is_empty()).then(|| mean_of(&values)),
                sd: (!values.is_empty()).then(|| sd_of(&values)),
                accuracy_at_max: mean_of(
                    &curves
                        .iter()
                        .filter_map(|c| c.points.last().map(|p| p.1))
                        .collect::<Vec<_>>(),
                ),
            });
        }
        let p: Vec<f64> = vr.iter().filter_map(|r| r.report.pci_a).collect();
        let d: Vec<f64> = vr.iter().filter_map(|r| r.report.delta_pci).collect();
        pci.push(PciSummary {
            variant: v,
            seeds: p.len(),
            mean: (!p.is_empty()).then(|| mean_of(&p)),
            sd: sd_of(&p),
            delta_pci_mean: (!d.is_empty()).then(|| mean_of(&d)),
        });
    }
    let pci_rows: Vec<PciCsv> = pci
        .iter()
        .map(|p| PciCsv {
            manifest_hash: h,
            variant: p.variant.id(),
            seeds: p.seeds,
            pci_a_mean: p.mean,
            pci_a_sd: p.sd,
            delta_pci_mean: p.delta_pci_mean,
        })
        .collect();
    write_csv(&dir.path(OUTPUTS[2]), &pci_rows)?;

    // Undefined AUROC enters at 0.5 and undefined ΔPCI at 0.
    let gap: Vec<f64> = included.iter().map(|r| r.report.ood_gap.unwrap_or(0.0)).collect();
    let gbi: Vec<f64> = included.iter().map(|r| r.report.gbi).collect();
    let dpci: Vec<f64> = included.iter().map(|r| r.report.delta_pci.unwrap_or(0.0)).collect();
    let auc: Vec<f64> = included.iter().map(|r| r.report.auroc_t2.unwrap_or(0.5)).collect();
    let n = included.len();
    let regression = if n > 5 {
        hierarchical_r2(&gap, &[("gbi", &gbi), ("delta_pci", &dpci), ("auroc_t2", &auc)])?
    } else {
        Vec::new()
    };
    let reg_rows: Vec<RegressionCsv> = regression
        .iter()
        .enumerate()
        .map(|(i, s)| RegressionCsv {
            manifest_hash: h,
            n,
            stage: i + 1,
            added: &s.added,
            r2: s.r2,
            delta_r2: s.delta_r2,
            condition_number: s.condition_number,
            collinear: s.collinear,
        })
        .collect();
    write_csv(&dir.path(OUTPUTS[4]), &reg_rows)?;

    let (reduced, full, dropped) = if n >= 2 {
        let r = composite_cts(&[("gbi", &gbi), ("delta_pci", &dpci)])?;
        let f = composite_cts(&[("gbi", &gbi), ("delta_pci", &dpci), ("auroc_t2", &auc)])?;
        let mut dropped = f.dropped.clone();
        dropped.extend(r.dropped.iter().filter(|d| !f.dropped.contains(d)).cloned());
        (r.scores, f.scores, dropped)
    } else {
        (vec![0.0; n], vec![0.0; n], Vec::new())
    };
    let comp_rows: Vec<CompositeCsv> = included
        .iter()
        .enumerate()
        .map(|(i, r)| CompositeCsv {
            manifest_hash: h,
            variant: r.variant.id(),
            seed: r.seed,
            gbi: gbi[i],
            delta_pci: dpci[i],
            auroc_t2: auc[i],
            reduced: reduced[i],
            full: full[i],
            ood_gap: gap[i],
        })
        .collect();
    write_csv(&dir.path(OUTPUTS[5]), &comp_rows)?;
    let corr = |x: &[f64]| if n >= 3 { pearson_r(x, &gap).ok().flatten() } else { None };
    let marker_r = vec![
        ("gbi".to_string(), corr(&gbi)),
        ("delta_pci".to_string(), corr(&dpci)),
        ("auroc_t2".to_string(), corr(&auc)),
    ];
    let loo = if n >= 5 { loo_r(&[&reduced], &gap).ok().flatten() } else { None };

    let mut metrics = Metrics::new();
    for r in &rows {
        let v = r.variant.id();
        if let Some(p) = r.report.pci_a {
            metrics.push((r.seed, format!("{v}/pci_a"), p));
        }
        metrics.push((r.seed, format!("{v}/gbi"), r.report.gbi));
        metrics.push((r.seed, format!("{v}/report_window"), r.report.report_window));
        metrics.push((r.seed, format!("{v}/ood_gap"), r.report.ood_gap.unwrap_or(f64::NAN)));
        for c in &r.curves {
            if let Ok(x) = c.l75.parse::<f64>() {
                metrics.push((r.seed, format!("{v}/l75_{:?}", c.site).to_lowercase(), x));
            }
        }
    }
    let summary = E3Summary {
        l75: l75s,
        pci,
        regression,
        regression_n: n,
        reduced_composite_r: corr(&reduced),
        full_composite_r: corr(&full),
        marker_r,
        loo_r: loo,
        dropped_markers: dropped,
        rows,
    };
    let result = ExperimentResult {
        id: dir.manifest.id.clone(),
        experiment: dir.manifest.experiment,
        manifest_hash: h.to_string(),
        seeds: dir.manifest.seeds.clone(),
        markers: summary.rows.iter().map(|r| r.report.clone()).collect(),
        stats: Vec::new(),
        exclusions,
        figures: OUTPUTS.iter().map(|s| s.to_string()).collect(),
        details: ExperimentDetails::E3(summary),
    };
    Ok((result, metrics))
}

/// Runs E3 with `config` into `out`.
pub fn run_e3(config: HarnessConfig, out: &std::path::Path) -> Result<ExperimentResult, HarnessError> {
    let manifest = super::RunManifest::new(super::Experiment::E3, config, false);
    super::run_experiment(&manifest, out)
}
