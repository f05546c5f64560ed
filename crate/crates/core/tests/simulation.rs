use sleeptrack::model::NetworkModel;
use sleeptrack::policy::{Controller, PolicyKind};
use sleeptrack::sim::{
    expected_lifetime, expected_lifetime_mc, run_batch, run_episode, run_learning_campaign, episode_rng, EpisodeOptions,
    Schedule,
};
use sleeptrack::tdelta::{build_table, Baseline};

#[test]
fn episodes_replay_exactly_from_their_stream() {
    let model = NetworkModel::network_b(0.2).unwrap();
    let table = build_table(&model, Baseline::Greedy, 30, 1).unwrap();
    let controller = Controller::fcr(table, 60);
    let options = EpisodeOptions { trace: true, ..EpisodeOptions::default() };
    let a = run_batch(&model, &controller, 6, 9, 2, &options).unwrap();
    let b = run_batch(&model, &controller, 6, 9, 2, &options).unwrap();
    assert_eq!(a, b);
    for e in &a {
        assert!((e.energy - 0.2 * e.awake_steps as f64).abs() < 1e-9);
        let trace = e.trace.as_ref().unwrap();
        assert_eq!(trace.len() as u64, e.duration);
        let charged: f64 = trace.iter().map(|s| s.cost).sum();
        assert!((charged - e.total()).abs() < 1e-9);
    }
}

#[test]
fn continuous_episodes_replay_too() {
    let model = NetworkModel::network_c(0.1).unwrap();
    let options = EpisodeOptions { particles: 128, ..EpisodeOptions::default() };
    let run = || run_episode(&model, &mut Controller::all_awake(), &options, &mut episode_rng(4, 0, 3)).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn zero_step_campaign_is_a_plain_batch() {
    let model = NetworkModel::network_b(0.1).unwrap();
    let table = build_table(&model, Baseline::Greedy, 30, 1).unwrap();
    let schedule = Schedule { warmup: 0, recorded: 5, cadence: 1, alpha: 0.0 };
    let options = EpisodeOptions::default();
    let campaign = run_learning_campaign(&model, PolicyKind::Fcr, table.clone(), 60, &schedule, 13, 1, &options).unwrap();
    let batch = run_batch(&model, &Controller::fcr(table.clone(), 60), 5, 13, 1, &options).unwrap();
    assert_eq!(campaign.episodes, batch);
    assert_eq!(campaign.table, table);
}

#[test]
fn learning_moves_the_table() {
    let model = NetworkModel::network_b(0.1).unwrap();
    let table = build_table(&model, Baseline::Greedy, 30, 1).unwrap();
    let schedule = Schedule { warmup: 3, recorded: 2, cadence: 2, alpha: 0.05 };
    let campaign =
        run_learning_campaign(&model, PolicyKind::Qmdp, table.clone(), 40, &schedule, 5, 0, &EpisodeOptions::default())
            .unwrap();
    assert_eq!(campaign.episodes.len(), 2);
    assert_ne!(campaign.table.values(), table.values());
    assert!(campaign.table.values().iter().all(|v| v.is_finite()));
}

#[test]
fn reference_policies_cannot_learn() {
    let model = NetworkModel::network_b(0.1).unwrap();
    let table = build_table(&model, Baseline::Greedy, 10, 1).unwrap();
    let err = run_learning_campaign(&model, PolicyKind::AllAwake, table, 10, &Schedule::default(), 1, 0, &EpisodeOptions::default());
    assert!(err.is_err());
}

#[test]
fn simulated_lifetime_agrees_with_absorption_times() {
    let exact = expected_lifetime(&NetworkModel::network_b(0.1).unwrap()).unwrap();
    assert_eq!(exact.se, 0.0);
    let model = NetworkModel::network_b(0.1).unwrap();
    let episodes = run_batch(&model, &Controller::all_asleep(), 4000, 2, 0, &EpisodeOptions::default()).unwrap();
    let durations: Vec<f64> = episodes.iter().map(|e| e.duration as f64).collect();
    let (mean, se) = sleeptrack::sim::mean_se(&durations);
    assert!((mean - exact.mean).abs() < 4.0 * se, "{mean} ± {se} vs {}", exact.mean);
    // Finite networks ignore the run count and use the exact answer.
    let mc = expected_lifetime_mc(&model, 10, 0).unwrap();
    assert_eq!(mc, exact);
}
