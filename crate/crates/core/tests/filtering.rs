mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sleeptrack::filter::{belief_update, estimate_discrete, particle_update, tracking_cost_discrete, DiscreteBelief, ParticleBelief};
use sleeptrack::model::{
    DistanceMeasure, MotionKernel, NetworkModel, Observation, Position, Reading, Sensor, SleepState, StateSpace,
    TransitionMatrix,
};

fn toy(kernel: Vec<Vec<f64>>, sensors: &[GaussSensor]) -> NetworkModel {
    let m = kernel.len() - 1;
    NetworkModel::new(
        "toy",
        StateSpace::finite((1..=m).map(|i| i as f64).collect()).unwrap(),
        MotionKernel::Matrix(TransitionMatrix::from_dense(kernel).unwrap()),
        sensors.iter().map(|s| Sensor::gaussian(s.location, s.variance).unwrap()).collect(),
        DistanceMeasure::hamming(),
        0.1,
        Position::Cell(0),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_filter_matches_enumeration(seed in any::<u64>(), m in 2usize..=5, n in 1usize..=3, steps in 1usize..=4) {
        let mut r = rng(seed);
        let kernel = random_kernel(&mut r, m, 0.05);
        let sensors: Vec<GaussSensor> = (0..n)
            .map(|_| GaussSensor { location: r.random_range(1.0..=m as f64), variance: r.random_range(0.2..3.0) })
            .collect();
        let model = toy(kernel.clone(), &sensors);
        let mut p0 = vec![0.0; m];
        p0[r.random_range(0..m)] = 1.0;
        let mut belief = DiscreteBelief::new([p0.clone(), vec![0.0]].concat()).unwrap();
        let mut seq = Vec::new();
        for _ in 0..steps {
            let timers: Vec<u32> = (0..n).map(|_| r.random_range(0..2)).collect();
            let ys: Vec<Option<f64>> = timers.iter().map(|&t| (t == 0).then(|| r.random_range(-1.0..11.0))).collect();
            let obs = Observation {
                readings: ys.iter().map(|y| y.map_or(Reading::Erased, Reading::Value)).collect(),
                exited: false,
            };
            belief = belief_update(&belief, &model, &obs, &SleepState::new(timers)).unwrap();
            seq.push(ys);
        }
        let coords: Vec<f64> = (1..=m).map(|i| i as f64).collect();
        let exact = enumerate_posterior(&p0, &kernel, &coords, &sensors, &seq);
        for (a, b) in belief.in_network().iter().zip(&exact) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn prediction_is_a_semigroup(s in 0usize..6, t in 0usize..6, start in 0usize..21) {
        let b = NetworkModel::network_b(0.1).unwrap();
        let mut p = vec![0.0; 22];
        p[start] = 1.0;
        let joint = b.kernel_predict(&p, s + t).unwrap();
        let split = b.kernel_predict(&b.kernel_predict(&p, s).unwrap(), t).unwrap();
        for (x, y) in joint.iter().zip(&split) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn hamming_cost_is_one_minus_the_map_mass(w in proptest::collection::vec(0.0f64..1.0, 2..8)) {
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let coords: Vec<f64> = (1..=w.len()).map(|i| i as f64).collect();
        let dm = DistanceMeasure::hamming();
        let total: f64 = w.iter().sum();
        let b_hat = estimate_discrete(&w, &coords, &dm).unwrap();
        let i = coords.iter().position(|&x| x == b_hat).unwrap();
        let expected = 1.0 - w[i] / total;
        prop_assert!((tracking_cost_discrete(&w, &coords, &dm) - expected).abs() < 1e-12);
    }
}

#[test]
fn particle_filter_tracks_the_exact_posterior_mean() {
    // A continuum network against its own exact filter is out of reach, so
    // compare the particle mean with a fine grid filter on one step.
    let c = NetworkModel::network_c(0.1).unwrap();
    let timers = SleepState::new(vec![1, 1, 1, 1, 0, 0, 1, 1, 1, 1]);
    let mut readings = vec![Reading::Erased; 10];
    readings[4] = Reading::Value(9.0);
    readings[5] = Reading::Value(2.5);
    let obs = Observation { readings: readings.clone(), exited: false };
    let sensors: Vec<GaussSensor> = c
        .sensors()
        .iter()
        .map(|s| GaussSensor { location: s.location, variance: 1.0 })
        .collect();
    // Grid posterior of x1 = 11 + N(0, 1), truncated to [1, 21].
    let h = 1e-3;
    let (mut z, mut mean) = (0.0, 0.0);
    let mut x: f64 = 1.0;
    while x <= 21.0 {
        let prior = (-(x - 11.0) * (x - 11.0) / 2.0).exp();
        let w = prior * sensors[4].density(9.0, x) * sensors[5].density(2.5, x);
        z += w;
        mean += w * x;
        x += h;
    }
    mean /= z;
    let mut estimates = Vec::new();
    for seed in 0..20 {
        let p = ParticleBelief::point(11.0, 4096).unwrap();
        let step = particle_update(&p, &c, &obs, &timers, &mut rng(seed)).unwrap();
        estimates.push(step.belief.moments().unwrap().0);
    }
    let avg = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!((avg - mean).abs() < 0.02, "particles {avg} vs grid {mean}");
}
