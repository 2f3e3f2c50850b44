use gwlab::envs::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wager_env(cfg: WageringConfig, seed: u64) -> WageringEnv {
    let mut e = WageringEnv::new(cfg, seed);
    e.reset();
    e
}

/// Drives a wagering episode with the oracle up to the wager step.
fn to_wager_step(e: &mut WageringEnv, choice_correct: bool) {
    loop {
        let info = e.info();
        if info.phase == Phase::Wager {
            return;
        }
        let mut a = e.oracle_action().unwrap();
        if info.phase == Phase::Decision && !choice_correct {
            a = 1 - a;
        }
        let out = e.step(a, None).unwrap();
        assert!(!out.done, "episode ended before a wager step");
    }
}

fn always_wager() -> WageringConfig {
    WageringConfig {
        wager_prob: 1.0,
        ..WageringConfig::default()
    }
}

#[test]
fn confident_correct_bet_pays_one() {
    let mut e = wager_env(always_wager(), 1);
    to_wager_step(&mut e, true);
    let out = e.step(ACT_DONE, Some(0.9)).unwrap();
    assert_eq!(out.reward, 1.0);
    assert!(out.done);
}

#[test]
fn confident_wrong_bet_costs_one() {
    let mut e = wager_env(always_wager(), 2);
    to_wager_step(&mut e, false);
    assert_eq!(e.step(ACT_DONE, Some(0.9)).unwrap().reward, -1.0);
}

#[test]
fn low_confidence_opts_out() {
    for (seed, correct) in [(3, true), (4, false)] {
        let mut e = wager_env(always_wager(), seed);
        to_wager_step(&mut e, correct);
        assert_eq!(e.step(ACT_DONE, Some(0.3)).unwrap().reward, 0.0);
    }
}

#[test]
fn confidence_outside_unit_interval_is_rejected() {
    let mut e = wager_env(always_wager(), 5);
    to_wager_step(&mut e, true);
    assert!(matches!(e.step(ACT_DONE, Some(1.5)), Err(EnvError::BadConfidence(_))));
}

#[test]
fn wager_flag_frequency_is_half() {
    let mut e = WageringEnv::new(WageringConfig::default(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let mut flagged = 0;
    for _ in 0..n {
        e.reset();
        let mut saw = false;
        loop {
            saw |= e.info().wager_step;
            let out = e.step(rng.random_range(0..N_ACTIONS), Some(rng.random())).unwrap();
            if out.done {
                break;
            }
        }
        flagged += usize::from(saw);
    }
    let freq = flagged as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}

#[test]
fn out_of_range_action_is_an_error() {
    let mut e = wager_env(WageringConfig::default(), 0);
    assert!(matches!(e.step(7, None), Err(EnvError::ActionOutOfRange(7))));
    let mut d = DualTaskEnv::new(DualTaskConfig::default(), 0);
    d.reset();
    assert!(matches!(d.step(9), Err(EnvError::ActionOutOfRange(9))));
}

/// Total reward of a fixed action/confidence script on a fresh copy of `env`.
fn script_reward(env: &WageringEnv, actions: &[usize], conf: f64) -> f64 {
    let mut e = env.clone();
    let mut total = 0.0;
    for &a in actions {
        let out = e.step(a, Some(conf)).unwrap();
        total += out.reward;
        if out.done {
            break;
        }
    }
    total
}

#[test]
fn oracle_reward_is_maximal_on_three_step_episodes() {
    let cfg = WageringConfig {
        nav_steps: 0,
        delay_steps: 0,
        wager_prob: 1.0,
        ..WageringConfig::default()
    };
    let mut env = WageringEnv::new(cfg, 11);
    let confs = [0.0, 0.3, 0.5, 0.51, 0.9, 1.0];
    for _ in 0..20 {
        env.reset();
        assert_eq!(env.episode_len(), 3);
        // oracle rollout
        let mut e = env.clone();
        let mut oracle_total = 0.0;
        loop {
            let a = e.oracle_action().unwrap();
            let out = e.step(a, Some(e.oracle_confidence())).unwrap();
            oracle_total += out.reward;
            if out.done {
                break;
            }
        }
        let mut best = f64::NEG_INFINITY;
        for a0 in 0..N_ACTIONS {
            for a1 in 0..N_ACTIONS {
                for a2 in 0..N_ACTIONS {
                    for &c in &confs {
                        best = best.max(script_reward(&env, &[a0, a1, a2], c));
                    }
                }
            }
        }
        assert_eq!(oracle_total, best);
        assert_eq!(oracle_total, 1.0);
    }
}

fn run_dual<F: FnMut(&DualTaskEnv) -> usize>(env: &mut DualTaskEnv, mut policy: F) -> (bool, bool, Vec<bool>) {
    env.reset();
    let mut decisions = (false, false);
    let mut window = Vec::new();
    loop {
        let info = env.info();
        let a = policy(env);
        if let Some(kind) = info.report {
            let ok = Some(a) == info.truth;
            window.push(ok);
            if info.decision_step {
                match kind {
                    ReportKind::First => decisions.0 = ok,
                    ReportKind::Second => decisions.1 = ok,
                }
            }
        }
        if env.step(a).unwrap().done {
            break;
        }
    }
    (decisions.0, decisions.1, window)
}

#[test]
fn oracle_solves_dual_task_and_held_out_pairs() {
    for split in [CueSplit::InDistribution, CueSplit::HeldOut] {
        let cfg = DualTaskConfig {
            split,
            ..DualTaskConfig::default()
        };
        let mut env = DualTaskEnv::new(cfg, 21);
        let n = 500;
        let mut conj = 0;
        for _ in 0..n {
            let (a, b, _) = run_dual(&mut env, |e| e.oracle_action().unwrap());
            conj += usize::from(a && b);
        }
        assert!(conj as f64 / n as f64 >= 0.99);
    }
}

#[test]
fn random_policy_sits_at_chance() {
    let mut env = DualTaskEnv::new(DualTaskConfig::default(), 22);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 20_000;
    let (mut dec, mut conj) = (0usize, 0usize);
    for _ in 0..n {
        let (a, b, _) = run_dual(&mut env, |_| rng.random_range(0..N_ACTIONS));
        dec += usize::from(a) + usize::from(b);
        conj += usize::from(a && b);
    }
    let dec_acc = dec as f64 / (2 * n) as f64;
    let conj_acc = conj as f64 / n as f64;
    assert!((dec_acc - 1.0 / 7.0).abs() < 0.01, "{dec_acc}");
    assert!((conj_acc - 1.0 / 49.0).abs() < 0.005, "{conj_acc}");
}

#[test]
fn first_report_target_is_the_color_cue() {
    let mut env = DualTaskEnv::new(DualTaskConfig::default(), 30);
    for _ in 0..50 {
        env.reset();
        let EpisodeLabels::Dual { color, object, .. } = env.labels() else { unreachable!() };
        assert_ne!(color, object);
        loop {
            let info = env.info();
            match info.phase {
                Phase::Report1 => {
                    let mut onehot = [0.0; N_ACTIONS];
                    onehot[color] = 1.0;
                    assert_eq!(info.oracle_dist(), onehot);
                }
                Phase::Report2 => {
                    assert_eq!(info.oracle_action, object);
                    assert!(info.primary_target);
                }
                _ => {}
            }
            if env.step(info.oracle_action).unwrap().done {
                break;
            }
        }
    }
}

#[test]
fn held_out_pairs_never_appear_in_distribution() {
    let id = CueSplit::InDistribution.pairs();
    let ood = CueSplit::HeldOut.pairs();
    assert_eq!(id.len() + ood.len(), 42);
    assert!(ood.iter().all(|p| !id.contains(p)));
    let mut env = make_ood_env(&DualTaskConfig::default(), 3);
    let base = DualTaskEnv::new(DualTaskConfig::default(), 3);
    assert_eq!(env.episode_len(), base.episode_len());
    for _ in 0..100 {
        env.reset();
        let EpisodeLabels::Dual { color, object, .. } = env.labels() else { unreachable!() };
        assert!(ood.contains(&(color, object)));
    }
}

#[test]
fn masking_probe_writes_consecutive_distractors() {
    let mut env = DualTaskEnv::new(DualTaskConfig::masking_probe(5), 4);
    let obs = env.reset();
    assert!(obs.cue_present());
    let mut writes = vec![env.info().cue_write];
    loop {
        let info = env.info();
        let out = env.step(info.oracle_action).unwrap();
        if out.done {
            break;
        }
        writes.push(out.info.cue_write);
        if out.info.phase == Phase::Mask {
            assert_eq!(out.obs.cue[MASK_FLAG], 1.0);
        }
    }
    assert_eq!(writes, vec![true, true, true, true, true, true, false, false]);
}

fn oracle_trace(task: TaskKind, seed: u64, episodes: usize) -> Vec<(usize, String)> {
    let mut env = make_env(task, seed);
    let mut out = Vec::new();
    for _ in 0..episodes {
        let obs = env.reset();
        out.push((99, obs_hash(&obs)));
        loop {
            let a = env.oracle_action().unwrap();
            let step = env.step(a, Some(1.0)).unwrap();
            out.push((a, obs_hash(&step.obs)));
            if step.done {
                break;
            }
        }
    }
    out
}

#[test]
fn same_seed_same_episode_stream() {
    for task in [TaskKind::Wagering, TaskKind::Dual] {
        assert_eq!(oracle_trace(task, 5, 20), oracle_trace(task, 5, 20));
        assert_ne!(oracle_trace(task, 5, 20), oracle_trace(task, 6, 20));
    }
}

#[test]
fn episodes_fit_the_step_budget() {
    for task in [TaskKind::Wagering, TaskKind::Dual, TaskKind::DualHeldOut, TaskKind::MaskingProbe] {
        let mut env = make_env(task, 1);
        for _ in 0..50 {
            env.reset();
            let mut n = 0;
            loop {
                n += 1;
                let a = env.oracle_action().unwrap();
                if env.step(a, Some(0.0)).unwrap().done {
                    break;
                }
            }
            assert!(n <= MAX_STEPS);
            assert_eq!(n, env.episode_len());
        }
        assert!(matches!(env.oracle_action(), Err(EnvError::Unreachable(Phase::Done))));
    }
}

#[test]
fn routing_contracts() {
    let mut env = DualTaskEnv::new(DualTaskConfig::default(), 2);
    let obs = env.reset();
    let (trunk, cue) = strong_lesion_route(&obs, CueWiring::Trunk, false).unwrap();
    assert_eq!(trunk, obs);
    assert!(cue.is_empty());
    let (trunk, cue) = strong_lesion_route(&obs, CueWiring::WorkspaceOnly, true).unwrap();
    assert!(trunk.cue.iter().all(|v| *v == 0.0));
    assert_eq!(cue, obs.cue.to_vec());
    assert_eq!(trunk.grid, obs.grid);
    assert!(matches!(
        strong_lesion_route(&obs, CueWiring::WorkspaceOnly, false),
        Err(EnvError::NoWorkspace(_))
    ));
}

#[test]
fn episode_log_round_trips() {
    let mut env = make_env(TaskKind::Dual, 9);
    env.reset();
    let mut records = Vec::new();
    loop {
        let info = env.info();
        let obs = env.obs();
        let out = env.step(info.oracle_action, None).unwrap();
        records.push(EpisodeLogRecord {
            schema_version: LOG_SCHEMA_VERSION,
            episode: 0,
            t: info.t,
            phase: info.phase,
            obs_hash: obs_hash(&obs),
            action: info.oracle_action,
            reward: out.reward,
            info,
        });
        if out.done {
            break;
        }
    }
    let mut buf = Vec::new();
    write_episode_log(&mut buf, &records).unwrap();
    let back = read_episode_log(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(back, records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn strong_lesion_trunk_never_carries_cue(seed in 0u64..10_000) {
        let mut env = make_env(TaskKind::Dual, seed);
        env.reset();
        loop {
            let (trunk, _) = strong_lesion_route(&env.obs(), CueWiring::WorkspaceOnly, true).unwrap();
            prop_assert!(trunk.cue.iter().all(|v| *v == 0.0));
            let a = env.oracle_action().unwrap();
            if env.step(a, None).unwrap().done {
                break;
            }
        }
    }
}
