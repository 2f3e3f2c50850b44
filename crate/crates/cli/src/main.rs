use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gwlab::agents::{AgentCheckpoint, AgentConfig, Arch, Routing};
use gwlab::envs::TaskKind;
use gwlab::harness::{
    compare_runs, measure_agent, render_report, run_experiment, train_cached, Experiment, HarnessConfig,
    RunManifest, SeedSpec, TrainPlan, Variant, FULL_SCALE_SEEDS,
};
use gwlab::interventions::{decision_accuracy, evaluate, EvalSpec, InterventionSpec};
use gwlab::stats::{coarse_p, hedges_g, permutation_test, welch_t};
use gwlab::training::TrainConfig;

#[derive(Parser)]
#[command(name = "gwlab", version, about = "Workspace and self-model agent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed count (`5`) or comma-separated list (`0,3,7`).
    #[arg(long)]
    seeds: Option<SeedSpec>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Use the full 20-seed population.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Re-run the manifest stored in this file instead of building one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Capacity scales for the E2 behavioral sweep.
    #[arg(long, value_delimiter = ',')]
    capacity_scale: Option<Vec<f64>>,
    /// Noise grid for the E3 titrations.
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// E3 variants to include.
    #[arg(long, value_delimiter = ',')]
    agent: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent family for each seed (checkpoints are cached in --out).
    Train {
        #[command(flatten)]
        common: Common,
        /// Experiment whose training recipe to use.
        #[arg(long, default_value = "e2")]
        exp: Experiment,
        /// Architecture or E3 variant id, e.g. B1, B1_AUG, HOT_ONLY.
        #[arg(long)]
        agent: String,
        #[arg(long)]
        routing: Option<Routing>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint under capacity scaling or slot noise.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "e2")]
        exp: Experiment,
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        capacity_scale: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Wagering task: metacognitive AUROC and self-model lesions.
    E1(ExperimentArgs),
    /// Dual task: capacity sweep, masking trace, bus audit.
    E2(ExperimentArgs),
    /// Noise titrations, PCI-A and marker regression across variants.
    E3(ExperimentArgs),
    /// Marker report (GBI, IS, AUROC, PCI-A, L75, OOD gap) for one checkpoint.
    Markers {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Welch, Hedges and permutation comparison of two groups in a CSV column.
    Stats {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long)]
        group_by: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 9999)]
        permutations: usize,
    },
    /// Render stored results; with --compare, a seed-level diff of two runs.
    Report {
        dir: Option<PathBuf>,
        #[arg(long, num_args = 2)]
        compare: Option<Vec<PathBuf>>,
    },
}

fn load_config(common: &Common) -> Result<(HarnessConfig, bool)> {
    let mut cfg = match &common.config {
        Some(p) => HarnessConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => HarnessConfig::default(),
    };
    if common.full_scale {
        cfg.seeds = SeedSpec::Count(FULL_SCALE_SEEDS);
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    let from_env = cfg.apply_env()?;
    cfg.validate()?;
    Ok((cfg, from_env))
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default))
}

fn run_exp(exp: Experiment, args: &ExperimentArgs) -> Result<()> {
    let out = out_dir(&args.common, exp.id());
    let manifest = if let Some(path) = &args.manifest {
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut m = RunManifest::load(dir)?;
        if m.experiment != exp {
            bail!("{} is a {} manifest", path.display(), m.experiment);
        }
        if let Some(w) = args.common.workers {
            m.config.workers = w;
        }
        m
    } else {
        let (mut cfg, from_env) = load_config(&args.common)?;
        if let Some(c) = &args.capacity_scale {
            cfg.e2.capacities = c.clone();
        }
        if let Some(g) = &args.sigma_grid {
            cfg.e3.sigma_grid = g.clone();
        }
        if let Some(a) = &args.agent {
            cfg.e3.variants = a
                .iter()
                .map(|s| s.parse::<Variant>())
                .collect::<Result<_, _>>()
                .map_err(anyhow::Error::msg)?;
        }
        cfg.validate()?;
        RunManifest::new(exp, cfg, from_env)
    };
    eprintln!(
        "{}: {} seeds, manifest {} -> {}",
        manifest.id,
        manifest.seeds.len(),
        manifest.short_hash(),
        out.display()
    );
    run_experiment(&manifest, &out)?;
    print!("{}", render_report(&out)?);
    Ok(())
}

fn train_plan(exp: Experiment, agent: &str, routing: Option<Routing>, cfg: &HarnessConfig) -> Result<TrainPlan> {
    let manifest = RunManifest::new(exp, cfg.clone(), false);
    let mut plan = match manifest.train_plans.iter().find(|p| p.label.eq_ignore_ascii_case(agent)) {
        Some(p) => p.clone(),
        None => match (exp, agent.parse::<Variant>()) {
            (Experiment::E3, Ok(v)) => {
                let (agent, train) = gwlab::harness::e3_variant_config(v, cfg.e3.train_episodes);
                TrainPlan {
                    label: v.id().into(),
                    agent,
                    task: TaskKind::Dual,
                    train,
                }
            }
            _ => {
                let arch: Arch = agent.parse()?;
                let (task, train) = match exp {
                    Experiment::E1 => (TaskKind::Wagering, TrainConfig::e1(0)),
                    Experiment::E2 => (TaskKind::Dual, TrainConfig::e2(0)),
                    Experiment::E3 => (TaskKind::Dual, TrainConfig::e3(0)),
                };
                TrainPlan {
                    label: arch.id().into(),
                    agent: AgentConfig::new(arch),
                    task,
                    train,
                }
            }
        },
    };
    if let Some(r) = routing {
        plan.agent = plan.agent.with_routing(r);
        plan.label = format!("{}-{r:?}", plan.label).to_lowercase();
    }
    plan.agent.validate()?;
    Ok(plan)
}

fn task_of(exp: Experiment) -> TaskKind {
    if exp == Experiment::E1 {
        TaskKind::Wagering
    } else {
        TaskKind::Dual
    }
}

fn stats_cmd(csv_path: &Path, column: &str, group_by: &str, a: &str, b: &str, n_perm: usize) -> Result<()> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let headers = r.headers()?.clone();
    let col = headers.iter().position(|h| h == column).with_context(|| format!("no column `{column}`"))?;
    let grp = headers.iter().position(|h| h == group_by).with_context(|| format!("no column `{group_by}`"))?;
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let Ok(v) = rec[col].parse::<f64>() else { continue };
        if &rec[grp] == a {
            xa.push(v);
        } else if &rec[grp] == b {
            xb.push(v);
        }
    }
    let w = welch_t(&xa, &xb)?;
    let g = hedges_g(&xa, &xb)?;
    let p = permutation_test(&xa, &xb, n_perm, 0)?;
    println!("method,n_a,n_b,estimate,ci_low,ci_high,t,dof,p,p_coarse,hedges_g,permutation_p");
    println!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        w.method,
        w.n_a,
        w.n_b,
        w.estimate,
        w.ci_low,
        w.ci_high,
        w.statistic,
        w.dof,
        w.p_value,
        coarse_p(w.p_value),
        g.map_or(String::new(), |g| g.to_string()),
        p
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            common,
            exp,
            agent,
            routing,
            episodes,
        } => {
            let (mut cfg, _) = load_config(&common)?;
            if let Some(n) = episodes {
                cfg.e1.train_episodes = n;
                cfg.e2.train_episodes = n;
                cfg.e3.train_episodes = n;
            }
            let plan = train_plan(exp, &agent, routing, &cfg)?;
            let out = out_dir(&common, "train");
            println!("label,seed,episodes,imitation,excluded");
            for seed in cfg.seed_list() {
                let (_, meta) = train_cached(&out, &plan, seed)?;
                println!(
                    "{},{seed},{},{:.4},{}",
                    plan.label, meta.episodes, meta.imitation_accuracy, meta.excluded
                );
            }
        }
        Command::Eval {
            checkpoint,
            exp,
            capacity_scale,
            sigma_grid,
            episodes,
            seed,
        } => {
            let agent = AgentCheckpoint::load(&checkpoint)?.to_agent()?;
            let spec = EvalSpec {
                task: task_of(exp),
                episodes,
                seed,
            };
            println!("capacity_scale,sigma,decision_accuracy,conjunction");
            for &cap in &capacity_scale {
                for &sigma in sigma_grid.as_deref().unwrap_or(&[0.0]) {
                    let iv = InterventionSpec {
                        capacity_scale: cap,
                        ..InterventionSpec::slot_noise(sigma)
                    };
                    let traces = evaluate(&agent, &spec, &iv)?;
                    let conj = traces.iter().filter(|t| t.conjunction_correct()).count() as f64 / traces.len().max(1) as f64;
                    println!("{cap},{sigma},{},{conj}", decision_accuracy(&traces));
                }
            }
        }
        Command::E1(args) => run_exp(Experiment::E1, &args)?,
        Command::E2(args) => run_exp(Experiment::E2, &args)?,
        Command::E3(args) => run_exp(Experiment::E3, &args)?,
        Command::Markers { checkpoint, config, seed } => {
            let cfg = match config {
                Some(p) => HarnessConfig::load(&p)?,
                None => HarnessConfig::default(),
            };
            let ck = AgentCheckpoint::load(&checkpoint)?;
            let m = measure_agent(&ck.to_agent()?, &cfg.e3, seed, ck.arch.id())?;
            println!("{}", serde_json::to_string_pretty(&m.report)?);
        }
        Command::Stats {
            csv,
            column,
            group_by,
            a,
            b,
            permutations,
        } => stats_cmd(&csv, &column, &group_by, &a, &b, permutations)?,
        Command::Report { dir, compare } => match (dir, compare) {
            (_, Some(pair)) => {
                println!("seed,key,a,b,diff");
                for d in compare_runs(&pair[0], &pair[1])? {
                    let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                    println!("{},{},{},{},{}", d.seed, d.key, f(d.a), f(d.b), f(d.diff));
                }
            }
            (Some(dir), None) => print!("{}", render_report(&dir)?),
            (None, None) => bail!("report needs a run directory or --compare A B"),
        },
    }
    Ok(())
}
