use gwlab::agents::*;
use gwlab::envs::{make_env, ReportKind, StepInfo, TaskKind, N_ACTIONS};
use gwlab::numerics::Graph;
use gwlab::training::*;

/// First navigation step and first report decision step of an oracle-driven dual episode.
fn nav_and_report_infos() -> (StepInfo, StepInfo) {
    let mut env = make_env(TaskKind::Dual, 3);
    env.reset();
    let mut info = env.info();
    let mut nav = None;
    loop {
        if info.report.is_none() && nav.is_none() {
            nav = Some(info.clone());
        }
        if info.report == Some(ReportKind::Second) && info.decision_step {
            return (nav.unwrap(), info);
        }
        info = env.step(info.oracle_action, None).unwrap().info;
    }
}

fn vars_with_logits(g: &mut Graph, logits: &[f64]) -> StepVars {
    let l = g.constant_vec(logits.to_vec());
    let e = g.constant_vec(vec![0.0]);
    StepVars {
        embed: e,
        core: e,
        slots: Vec::new(),
        flat: None,
        draft: l,
        logits: l,
        z_self: None,
        confidence: None,
        stim_prob: None,
        wrote: None,
    }
}

fn neg_log_softmax(l: &[f64], i: usize) -> f64 {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = l.iter().map(|v| (v - m).exp()).sum();
    -(l[i] - m - z.ln())
}

#[test]
fn kl_weights_multiply() {
    let (nav, report) = nav_and_report_infos();
    let cfg = TrainConfig::default();
    assert_eq!(kl_weight(&nav, &cfg), 1.0);
    assert!(report.primary_target);
    assert_eq!(kl_weight(&report, &cfg), 60.0);
    let secondary = StepInfo {
        primary_target: false,
        ..report
    };
    assert_eq!(kl_weight(&secondary, &cfg), 3.0);
}

#[test]
fn two_step_loss_equals_hand_weighted_sum() {
    let (nav, report) = nav_and_report_infos();
    let report = StepInfo {
        primary_target: false,
        ..report
    };
    let cfg = TrainConfig::e2(0);
    let l1 = [0.2, -0.4, 1.0, 0.0, 0.3, -1.2, 0.5];
    let l2 = [1.5, 0.1, -0.3, 0.7, 0.0, 0.2, -0.8];
    let mut g = Graph::new();
    let v1 = vars_with_logits(&mut g, &l1);
    let v2 = vars_with_logits(&mut g, &l2);
    let a = step_loss(&mut g, &v1, &nav, &cfg).unwrap();
    let b = step_loss(&mut g, &v2, &report, &cfg).unwrap();
    let total = g.scalar(a) + g.scalar(b);
    let oracle = neg_log_softmax(&l1, nav.oracle_action) + 3.0 * neg_log_softmax(&l2, report.oracle_action);
    assert!((total - oracle).abs() < 1e-12, "{total} vs {oracle}");
}

#[test]
fn correctness_label_tracks_the_agent() {
    let (nav, report) = nav_and_report_infos();
    let truth = report.truth.unwrap();
    let mut logits = [0.0; N_ACTIONS];
    logits[truth] = 2.0;
    assert!(correctness_label(&report, &logits).unwrap());
    logits[(truth + 1) % N_ACTIONS] = 3.0;
    assert!(!correctness_label(&report, &logits).unwrap());
    assert!(correctness_label(&nav, &logits).is_err());
}

#[test]
fn untrained_agent_labels_are_not_degenerate() {
    let agent = Agent::new(AgentConfig::new(Arch::B2), 2).unwrap();
    let mut env = make_env(TaskKind::Dual, 8);
    let (mut yes, mut no) = (0, 0);
    for _ in 0..60 {
        let trace = run_episode(&agent, &mut env, 1.0, &mut NoHooks).unwrap();
        for r in trace.steps.iter().filter(|r| r.info.report.is_some()) {
            if correctness_label(&r.info, &r.logits).unwrap() {
                yes += 1;
            } else {
                no += 1;
            }
        }
    }
    assert!(yes > 0 && no > 0, "{yes} / {no}");
}

#[test]
fn presets() {
    let d = TrainConfig::default();
    assert_eq!((d.lr, d.report_step_weight, d.primary_class_weight), (1e-3, 3.0, 20.0));
    assert_eq!(d.update, UpdateGranularity::PerEpisode);
    assert_eq!(d.validation_episodes, 200);
    let e1 = TrainConfig::e1(0);
    assert_eq!((e1.episodes, e1.meta_loss_coeff, e1.stimulus_aux), (4000, 1.0, true));
    let e2 = TrainConfig::e2(0);
    assert_eq!((e2.episodes, e2.meta_loss_coeff, e2.stimulus_aux), (4000, 0.0, false));
    let e3 = TrainConfig::e3(0);
    assert_eq!((e3.episodes, e3.meta_loss_coeff, e3.stimulus_aux), (8000, 1.0, false));
}

#[test]
fn empty_probe_loss_is_ln2() {
    let ws = WorkspaceState::new(4, 16, 1.0);
    for present in [false, true] {
        let l = stimulus_aux_value(&ws, &[0.0; 64], 0.0, present);
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn probe_loss_vanishes_on_separable_slots() {
    // Logistic regression by plain gradient descent as the reference learner.
    let make = |sign: f64| {
        let mut ws = WorkspaceState::new(2, 2, 1.0);
        ws = workspace_write(&ws, &[sign, 0.5 * sign]);
        ws
    };
    let data = [(make(1.0), true), (make(-1.0), false)];
    let (mut w, mut b) = (vec![0.0; 4], 0.0);
    let mean_loss = |w: &[f64], b: f64| data.iter().map(|(ws, y)| stimulus_aux_value(ws, w, b, *y)).sum::<f64>() / 2.0;
    let start = mean_loss(&w, b);
    for _ in 0..2000 {
        for (ws, y) in &data {
            let z: f64 = ws.slots.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - f64::from(u8::from(*y));
            for (wi, xi) in w.iter_mut().zip(&ws.slots) {
                *wi -= 0.5 * err * xi;
            }
            b -= 0.5 * err;
        }
    }
    assert!((start - 2f64.ln()).abs() < 1e-12);
    assert!(mean_loss(&w, b) < 1e-2);
}

fn self_model_grad_norm(meta: f64) -> f64 {
    let agent = Agent::new(AgentConfig::new(Arch::B2).with_routing(Routing::Workspace), 5).unwrap();
    let cfg = TrainConfig {
        meta_loss_coeff: meta,
        stimulus_aux: false,
        ..TrainConfig::e1(5)
    };
    let mut env = make_env(TaskKind::Wagering, 1);
    let mut obs = env.reset();
    let mut info = env.info();
    let mut g = Graph::new();
    let p = agent.params.bind(&mut g);
    let mut st = GraphState::initial(&agent, &mut g, 1.0);
    let mut total = None;
    loop {
        let vars = agent.step(&mut g, &p, &mut st, &obs, &StepControl::default(), None).unwrap();
        let l = step_loss(&mut g, &vars, &info, &cfg).unwrap();
        total = Some(match total {
            Some(t) => g.add(t, l).unwrap(),
            None => l,
        });
        let out = env.step(info.oracle_action, None).unwrap();
        if out.done {
            break;
        }
        obs = out.obs;
        info = out.info;
    }
    g.backward(total.unwrap()).unwrap();
    let grads = agent.params.collect_grads(&g, &p);
    agent
        .params
        .entries()
        .iter()
        .zip(&grads)
        .filter(|(e, _)| e.name.starts_with("self."))
        .flat_map(|(_, gr)| gr.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[test]
fn meta_loss_puts_the_self_model_in_the_gradient_path() {
    assert_eq!(self_model_grad_norm(0.0), 0.0);
    assert!(self_model_grad_norm(1.0) > 0.0);
}

fn small(seed: u64) -> TrainConfig {
    TrainConfig {
        episodes: 30,
        validation_episodes: 5,
        log_every: 10,
        log_eval_episodes: 2,
        ..TrainConfig::e2(seed)
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let cfg = AgentConfig::new(Arch::B1);
    let a = train_agent(cfg.clone(), TaskKind::Dual, &small(4)).unwrap();
    let b = train_agent(cfg.clone(), TaskKind::Dual, &small(4)).unwrap();
    let c = train_agent(cfg, TaskKind::Dual, &small(5)).unwrap();
    assert_eq!(a.agent.params.digest(), b.agent.params.digest());
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_ne!(a.agent.params.digest(), c.agent.params.digest());
}

#[test]
fn loss_falls_over_a_smoke_run() {
    let cfg = TrainConfig {
        episodes: 100,
        log_eval_episodes: 0,
        ..small(1)
    };
    let out = train_agent(AgentConfig::new(Arch::A1), TaskKind::Dual, &cfg).unwrap();
    assert_eq!(out.log.len(), 10);
    let first = out.log.first().unwrap().mean_loss;
    let last = out.log.last().unwrap().mean_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn per_step_updates_train_too() {
    let cfg = TrainConfig {
        update: UpdateGranularity::PerStep,
        episodes: 3,
        log_eval_episodes: 0,
        ..small(2)
    };
    let agent = Agent::new(AgentConfig::new(Arch::B1), 2).unwrap();
    let out = train_agent(agent.config.clone(), TaskKind::Dual, &cfg).unwrap();
    assert_ne!(out.agent.params.digest(), agent.params.digest());
}

#[test]
fn gate_flags_exclusion() {
    let cfg = TrainConfig {
        gate: 1.0,
        episodes: 2,
        log_eval_episodes: 0,
        ..small(0)
    };
    let out = train_agent(AgentConfig::new(Arch::A1), TaskKind::Dual, &cfg).unwrap();
    assert!(out.checkpoint.meta.excluded);
    assert_eq!(out.checkpoint.meta.imitation_accuracy, out.validation.imitation);
}

#[test]
fn conjunction_never_exceeds_report_window_accuracy() {
    for seed in 0..4 {
        let agent = Agent::new(AgentConfig::new(Arch::B1), seed).unwrap();
        let m = validate(&agent, TaskKind::Dual, 20, seed).unwrap();
        assert!(m.conjunction <= m.report_window + 1e-12, "{m:?}");
        for v in [m.imitation, m.per_step, m.report_window, m.conjunction] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
