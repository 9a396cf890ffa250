use cpql::data::{generate_dataset, write_dataset, Dataset, DatasetHeader, Transition};
use cpql::envs::make_env;
use cpql::numerics::Rng;
use cpql::trainer::*;
use cpql::Error;

fn small(env: &str) -> TrainConfig {
    TrainConfig {
        env_name: env.into(),
        hidden: 16,
        batch: 16,
        total_iters: 40,
        eval_every: 20,
        eval_episodes: 2,
        warmup: 50,
        ..TrainConfig::default()
    }
}

fn bimodal_data(n: usize) -> Dataset {
    let ts = generate_dataset("bimodal-reach", "bimodal", n, &mut Rng::new(3)).unwrap();
    Dataset::new(DatasetHeader { state_dim: 1, action_dim: 1 }, ts).unwrap()
}

#[test]
fn same_seed_gives_identical_metrics_files() {
    let data = bimodal_data(500);
    // Same path each time so the echoed config is identical too.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let run = |seed: u64| {
        let cfg = TrainConfig {
            seed,
            metrics_path: Some(path.clone()),
            ..small("bimodal-reach")
        };
        train_offline_with(&cfg, &data, None).unwrap();
        std::fs::read(&path).unwrap()
    };
    let a = run(4);
    let b = run(4);
    let c = run(5);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn offline_never_steps_a_collection_env() {
    let out = train_offline_with(&small("bimodal-reach"), &bimodal_data(200), None).unwrap();
    assert_eq!(out.env_steps, 0);
    assert_eq!(out.metrics.iter().map(|r| r.iter).collect::<Vec<_>>(), [20, 40]);
}

#[test]
fn offline_reads_dataset_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = bimodal_data(100);
    let path = dir.path().join("d.bin");
    write_dataset(&path, data.header, &data.transitions).unwrap();
    let cfg = TrainConfig {
        dataset_path: Some(path),
        total_iters: 5,
        ..small("bimodal-reach")
    };
    assert_eq!(train(&cfg, None).unwrap().metrics.len(), 1);

    let missing = TrainConfig { dataset_path: None, ..cfg };
    assert!(matches!(train(&missing, None), Err(Error::Config(_))));
}

#[test]
fn dataset_dims_must_match_env() {
    let err = train_offline_with(&small("point-mass-2d"), &bimodal_data(10), None).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn online_warmup_fills_replay_before_first_update() {
    let cfg = TrainConfig {
        setting: Setting::Online,
        alpha: 0.05,
        warmup: 1000,
        total_iters: 30,
        eval_every: 0,
        ..small("point-mass-2d")
    };
    let out = train_online(&cfg, None).unwrap();
    assert!(out.replay_len_at_first_update.unwrap() >= 1000);
    assert_eq!(out.replay_len, 1000 + 30);
    assert_eq!(out.env_steps, 1030);
}

#[test]
fn online_appends_one_transition_per_iteration() {
    for iters in [1, 7, 25] {
        let cfg = TrainConfig {
            setting: Setting::Online,
            total_iters: iters,
            eval_every: 0,
            ..small("pendulum-swingup")
        };
        let out = train_online(&cfg, None).unwrap();
        assert_eq!(out.replay_len, cfg.warmup + iters);
        assert_eq!(out.replay_len_at_first_update, Some(cfg.warmup + 1));
    }
}

#[test]
fn zero_iterations_logs_the_initial_policy() {
    let cfg = TrainConfig { total_iters: 0, ..small("bimodal-reach") };
    let out = train_offline_with(&cfg, &bimodal_data(50), None).unwrap();
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.metrics[0].iter, 0);
    assert_eq!(out.agent.policy_updates(), 0);
}

#[test]
fn hook_sees_every_logged_row() {
    let mut seen = Vec::new();
    let mut hook = |r: &MetricsRow| seen.push(r.iter);
    train_offline_with(&small("bimodal-reach"), &bimodal_data(50), Some(&mut hook)).unwrap();
    assert_eq!(seen, [20, 40]);
}

#[test]
fn cpiql_critic_step_never_runs_the_policy() {
    let cfg = TrainConfig { mode: Algo::Cpiql, ..small("point-mass-2d") };
    let env = make_env(&cfg.env_name).unwrap();
    let mut rng = Rng::new(1);
    let mut agent = Agent::new(&cfg, env.spec(), &mut rng).unwrap();
    let ts = generate_dataset("point-mass-2d", "random", 64, &mut rng).unwrap();
    let data = Dataset::new(DatasetHeader { state_dim: 4, action_dim: 2 }, ts).unwrap();
    let batch = data.sample(cfg.batch, &mut rng).unwrap();

    agent.policy.net.reset_forward_rows();
    agent.policy_target.net.reset_forward_rows();
    let (_, v) = agent.critic_step(&cfg, &batch, &mut rng).unwrap();
    assert!(v.is_some());
    assert_eq!(agent.policy.net.forward_rows(), 0);
    assert_eq!(agent.policy_target.net.forward_rows(), 0);

    // The double-Q critic does sample next actions.
    let cfg = TrainConfig { mode: Algo::Cpql, ..cfg };
    let mut agent = Agent::new(&cfg, env.spec(), &mut rng).unwrap();
    agent.policy_target.net.reset_forward_rows();
    agent.critic_step(&cfg, &batch, &mut rng).unwrap();
    assert_eq!(agent.policy_target.net.forward_rows(), cfg.batch as u64);
}

#[test]
fn nonfinite_loss_aborts_with_a_marker_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let huge = Transition {
        state: vec![0.0],
        action: vec![0.5],
        reward: 1e200,
        next_state: vec![0.0],
        done: true,
    };
    let data = Dataset::new(DatasetHeader { state_dim: 1, action_dim: 1 }, vec![huge]).unwrap();
    let cfg = TrainConfig {
        metrics_path: Some(path.clone()),
        ..small("bimodal-reach")
    };
    let err = train_offline_with(&cfg, &data, None).unwrap_err();
    assert!(matches!(err, Error::Training(_)), "{err}");
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# aborted at iter=1"), "{text}");
}

#[test]
fn checkpoint_written_at_log_points_restores_the_policy() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("p.ckpt");
    let cfg = TrainConfig {
        checkpoint_path: Some(ckpt.clone()),
        ..small("bimodal-reach")
    };
    let out = train_offline_with(&cfg, &bimodal_data(100), None).unwrap();
    let (back_cfg, agent) = read_checkpoint(&ckpt).unwrap();
    assert_eq!(back_cfg, cfg);
    let s = [0.0];
    let noise = [80.0 * 0.3];
    let a = out.agent.policy.sample_actions_from_noise(&s, &noise).unwrap()[0];
    let b = agent.policy.sample_actions_from_noise(&s, &noise).unwrap()[0];
    assert!((a - b).abs() < 1e-4, "{a} vs {b}");
}

#[test]
fn online_rejects_cpiql() {
    let cfg = TrainConfig {
        setting: Setting::Online,
        mode: Algo::Cpiql,
        ..small("point-mass-2d")
    };
    assert!(matches!(train(&cfg, None), Err(Error::Config(_))));
}
