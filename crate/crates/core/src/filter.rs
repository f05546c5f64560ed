//! Belief filtering: the exact Bayes filter on finite networks, a bootstrap
//! particle filter on continuous ones, the Bayes estimator and the expected
//! tracking cost of a belief.

use log::warn;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{DistanceKind, DistanceMeasure, NetworkModel, Position, Reading, SensorKind, SleepState};
use crate::model::{gaussian_step, Observation};

/// Default particle count on continuous networks.
pub const DEFAULT_PARTICLES: usize = 512;

/// Rejection attempts per particle when every particle left the network but
/// the object did not.
const REJECTION_TRIES: usize = 1000;

/// Dense belief over the `m` in-network states and the terminal state
/// (index `m`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBelief {
    probs: Vec<f64>,
}

impl DiscreteBelief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(invalid("belief entries must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("belief sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Point mass on `state` among `size` states (terminal included).
    pub fn point(size: usize, state: usize) -> Self {
        let mut probs = vec![0.0; size];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn in_network(&self) -> &[f64] {
        &self.probs[..self.probs.len() - 1]
    }

    pub fn terminal_mass(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    pub fn in_network_mass(&self) -> f64 {
        self.in_network().iter().sum()
    }
}

/// Weighted particle cloud over a continuum plus the mass on the terminal
/// state. Weights and terminal mass sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief {
    points: Vec<f64>,
    weights: Vec<f64>,
    terminal_mass: f64,
}

impl ParticleBelief {
    /// `n` equally weighted copies of `x`.
    pub fn point(x: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("a particle belief needs at least two particles"));
        }
        Ok(Self {
            points: vec![x; n],
            weights: vec![1.0 / n as f64; n],
            terminal_mass: 0.0,
        })
    }

    pub fn from_weighted(points: Vec<f64>, weights: Vec<f64>, terminal_mass: f64) -> Result<Self> {
        if points.len() != weights.len() || points.len() < 2 {
            return Err(invalid("need at least two particles with one weight each"));
        }
        let sum: f64 = weights.iter().sum::<f64>() + terminal_mass;
        if weights.iter().any(|&w| !(w >= 0.0)) || !(terminal_mass >= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("particle weights must be non-negative and sum to one"));
        }
        Ok(Self { points, weights, terminal_mass })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn terminal_mass(&self) -> f64 {
        self.terminal_mass
    }

    pub fn in_network_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn terminal(n: usize, x: f64) -> Self {
        Self {
            points: vec![x; n],
            weights: vec![0.0; n],
            terminal_mass: 1.0,
        }
    }

    /// Weighted mean and variance of the in-network part.
    pub fn moments(&self) -> Option<(f64, f64)> {
        let mass = self.in_network_mass();
        if mass <= 0.0 {
            return None;
        }
        let mean = self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>() / mass;
        let var = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum::<f64>()
            / mass;
        Some((mean, var))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Discrete(DiscreteBelief),
    Particles(ParticleBelief),
}

impl Belief {
    /// The known starting belief of an episode.
    pub fn initial(model: &NetworkModel, particles: usize) -> Result<Self> {
        Ok(match model.start() {
            Position::Cell(i) => Belief::Discrete(DiscreteBelief::point(model.matrix()?.size(), i)),
            Position::Point(x) => Belief::Particles(ParticleBelief::point(x, particles)?),
            Position::Terminal => return Err(invalid("an episode cannot start at the terminal state")),
        })
    }

    pub fn in_network_mass(&self) -> f64 {
        match self {
            Belief::Discrete(p) => p.in_network_mass(),
            Belief::Particles(p) => p.in_network_mass(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteBelief> {
        match self {
            Belief::Discrete(p) => Some(p),
            Belief::Particles(_) => None,
        }
    }
}

/// Posterior of a finite belief after one motion step and the observation
/// `obs`, taken with the timers `timers` in force.
pub fn belief_update(
    p: &DiscreteBelief,
    model: &NetworkModel,
    obs: &Observation,
    timers: &SleepState,
) -> Result<DiscreteBelief> {
    check_erasures(model, obs, timers)?;
    let matrix = model.matrix()?;
    if p.probs.len() != matrix.size() {
        return Err(invalid(format!("belief has {} entries, expected {}", p.probs.len(), matrix.size())));
    }
    let prior = matrix.predict(&p.probs);
    if obs.exited {
        let t = matrix.terminal();
        if prior[t] <= 0.0 {
            return Err(Error::Inconsistent { sensor: model.sensor_count() + 1 });
        }
        return Ok(DiscreteBelief::point(prior.len(), t));
    }
    condition(&prior, model, &obs.readings)
}

/// Conditions a finite prior on the object being in the network and on the
/// given readings, with no motion step. Erased readings carry no
/// information.
pub fn condition(prior: &[f64], model: &NetworkModel, readings: &[Reading]) -> Result<DiscreteBelief> {
    let coords = model.space().coords();
    let m = coords.len();
    if prior.len() != m + 1 || readings.len() != model.sensor_count() {
        return Err(invalid("belief or observation size does not match the network"));
    }
    let virtual_sensor = model.sensor_count() + 1;
    if prior[..m].iter().all(|&v| v <= 0.0) {
        return Err(Error::Inconsistent { sensor: virtual_sensor });
    }
    let mut logw = vec![f64::NEG_INFINITY; m];
    for (b, lw) in logw.iter_mut().enumerate() {
        if prior[b] > 0.0 {
            *lw = prior[b].ln() + log_likelihood(model, readings, coords[b]);
        }
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Inconsistent { sensor: offending_sensor(prior, model, readings) });
    }
    let mut probs: Vec<f64> = logw.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= total);
    probs.push(0.0);
    Ok(DiscreteBelief { probs })
}

/// Sum of awake-sensor log-likelihoods with the object at coordinate `b`.
pub fn log_likelihood(model: &NetworkModel, readings: &[Reading], b: f64) -> f64 {
    model
        .sensors()
        .iter()
        .zip(readings)
        .filter_map(|(s, r)| r.value().map(|v| s.log_likelihood(v, b)))
        .sum()
}

/// Log of the density normalizing constants dropped by [`log_likelihood`].
fn log_normalizer(model: &NetworkModel, readings: &[Reading]) -> f64 {
    model
        .sensors()
        .iter()
        .zip(readings)
        .filter(|(_, r)| r.value().is_some())
        .map(|(s, _)| match s.kind {
            SensorKind::Gaussian { variance } => -0.5 * (2.0 * std::f64::consts::PI * variance).ln(),
            SensorKind::PerfectBinary => 0.0,
        })
        .sum()
}

/// First sensor (1-based) whose reading, applied after those before it,
/// leaves no state with positive probability.
fn offending_sensor(prior: &[f64], model: &NetworkModel, readings: &[Reading]) -> usize {
    let coords = model.space().coords();
    let mut alive: Vec<bool> = coords.iter().enumerate().map(|(b, _)| prior[b] > 0.0).collect();
    for (l, (s, r)) in model.sensors().iter().zip(readings).enumerate() {
        if let Some(v) = r.value() {
            for (b, a) in alive.iter_mut().enumerate() {
                *a = *a && s.log_likelihood(v, coords[b]) > f64::NEG_INFINITY;
            }
            if !alive.iter().any(|&a| a) {
                return l + 1;
            }
        }
    }
    model.sensor_count() + 1
}

fn check_erasures(model: &NetworkModel, obs: &Observation, timers: &SleepState) -> Result<()> {
    if obs.readings.len() != model.sensor_count() || timers.len() != model.sensor_count() {
        return Err(invalid("observation or timer count does not match the sensor count"));
    }
    for (l, (r, &t)) in obs.readings.iter().zip(timers.timers()).enumerate() {
        if (t > 0) != (*r == Reading::Erased) {
            return Err(invalid(format!("sensor {} reading does not match its timer", l + 1)));
        }
    }
    Ok(())
}

/// Result of a particle filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleStep {
    pub belief: ParticleBelief,
    /// Every particle was incompatible with the readings and the update fell
    /// back to the prediction alone.
    pub degenerate: bool,
}

/// Bootstrap particle filter step: propagate, weight, then systematic
/// resampling back to the same particle count.
pub fn particle_update<R: Rng + ?Sized>(
    p: &ParticleBelief,
    model: &NetworkModel,
    obs: &Observation,
    timers: &SleepState,
    rng: &mut R,
) -> Result<ParticleStep> {
    check_erasures(model, obs, timers)?;
    let variance = match model.kernel() {
        crate::model::MotionKernel::Gaussian { variance } => *variance,
        _ => return Err(Error::Unsupported("particle filtering needs a continuous network".into())),
    };
    let (lo, hi) = model.space().bounds();
    let n = p.len();
    if obs.exited {
        return Ok(ParticleStep { belief: ParticleBelief::terminal(n, p.points[0]), degenerate: false });
    }
    if p.in_network_mass() <= 0.0 {
        return Err(Error::Inconsistent { sensor: model.sensor_count() + 1 });
    }

    let mut points = Vec::with_capacity(n);
    let mut logw = Vec::with_capacity(n);
    for (&x, &w) in p.points.iter().zip(&p.weights) {
        match gaussian_step(x, variance, lo, hi, rng) {
            Some(y) if w > 0.0 => {
                points.push(y);
                logw.push(w.ln());
            }
            _ => {}
        }
    }
    if points.is_empty() {
        // The whole cloud left but the object did not: redraw conditioned on
        // staying.
        let source = resample_indices(&p.weights, n, rng);
        for i in source {
            points.push(truncated_step(p.points[i], variance, lo, hi, rng));
            logw.push(0.0);
        }
    }
    let lik: Vec<f64> = points.iter().map(|&y| log_likelihood(model, &obs.readings, y)).collect();
    let max_lik = lik.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + log_normalizer(model, &obs.readings);
    let degenerate = !(max_lik >= f64::MIN_POSITIVE.ln());
    if degenerate {
        warn!("particle weights underflowed; keeping the prediction");
    } else {
        logw.iter_mut().zip(&lik).for_each(|(w, l)| *w += l);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logw.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let idx = resample_indices(&weights, n, rng);
    let resampled = idx.into_iter().map(|i| points[i]).collect();
    Ok(ParticleStep {
        belief: ParticleBelief {
            points: resampled,
            weights: vec![1.0 / n as f64; n],
            terminal_mass: 0.0,
        },
        degenerate,
    })
}

fn truncated_step<R: Rng + ?Sized>(x: f64, variance: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    for _ in 0..REJECTION_TRIES {
        if let Some(y) = gaussian_step(x, variance, lo, hi, rng) {
            return y;
        }
    }
    x.clamp(lo, hi)
}

/// Systematic resampling: `n` indices drawn with one uniform offset.
/// Weights need not be normalized.
pub fn resample_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Bayes estimate of the object coordinate: the posterior mode under Hamming
/// cost (smallest coordinate on ties), the posterior mean under squared
/// error.
pub fn estimate(p: &Belief, model: &NetworkModel) -> Result<f64> {
    match p {
        Belief::Discrete(p) => estimate_discrete(p.in_network(), model.space().coords(), model.distance()),
        Belief::Particles(p) => match model.distance().kind {
            DistanceKind::SquaredEuclidean => p.moments().map(|(m, _)| m).ok_or(Error::EstimatorUndefined),
            DistanceKind::Hamming => Err(Error::Unsupported("Hamming cost on a continuum".into())),
        },
    }
}

/// Bayes estimate from unnormalized in-network masses at `coords`.
pub fn estimate_discrete(mass: &[f64], coords: &[f64], dm: &DistanceMeasure) -> Result<f64> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EstimatorUndefined);
    }
    Ok(match dm.kind {
        DistanceKind::Hamming => coords[map_index(mass)],
        DistanceKind::SquaredEuclidean => mass.iter().zip(coords).map(|(p, x)| p * x).sum::<f64>() / total,
    })
}

/// Index of the largest entry; the first one wins ties.
pub fn map_index(mass: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in mass.iter().enumerate() {
        if v > mass[best] {
            best = i;
        }
    }
    best
}

/// Expected tracking cost of the Bayes estimate under the belief,
/// conditioned on the object being in the network: `1 - max` for Hamming,
/// the variance for squared error. Zero when no mass is in the network.
pub fn expected_tracking_cost(p: &Belief, model: &NetworkModel) -> f64 {
    match p {
        Belief::Discrete(p) => tracking_cost_discrete(p.in_network(), model.space().coords(), model.distance()),
        Belief::Particles(p) => p.moments().map_or(0.0, |(_, v)| v),
    }
}

/// [`expected_tracking_cost`] for unnormalized in-network masses.
pub fn tracking_cost_discrete(mass: &[f64], coords: &[f64], dm: &DistanceMeasure) -> f64 {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    match dm.kind {
        DistanceKind::Hamming => {
            let max = mass.iter().cloned().fold(0.0, f64::max);
            (1.0 - max / total).max(0.0)
        }
        DistanceKind::SquaredEuclidean => {
            let mean = mass.iter().zip(coords).map(|(p, x)| p * x).sum::<f64>() / total;
            let var = mass.iter().zip(coords).map(|(p, x)| p * (x - mean) * (x - mean)).sum::<f64>() / total;
            var.min(dm.bound)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn awake_obs(readings: Vec<Reading>) -> Observation {
        Observation { readings, exited: false }
    }

    #[test]
    fn perfect_neighbor_pins_the_object() {
        let a = NetworkModel::network_a(0.1).unwrap();
        let p = DiscreteBelief::point(42, 20);
        let mut readings = vec![Reading::Erased; 41];
        readings[19] = Reading::Value(1.0);
        let mut timers = vec![1; 41];
        timers[19] = 0;
        let post = belief_update(&p, &a, &awake_obs(readings), &SleepState::new(timers)).unwrap();
        assert_eq!(post.probs()[19], 1.0);
        assert_eq!(post.in_network_mass(), 1.0);
    }

    #[test]
    fn erasures_leave_the_prediction() {
        let a = NetworkModel::network_a(0.1).unwrap();
        let p = DiscreteBelief::point(42, 20);
        let obs = awake_obs(vec![Reading::Erased; 41]);
        let post = belief_update(&p, &a, &obs, &SleepState::new(vec![2; 41])).unwrap();
        assert_eq!(post.probs()[19], 0.5);
        assert_eq!(post.probs()[21], 0.5);
    }

    #[test]
    fn impossible_reading_names_the_sensor() {
        let a = NetworkModel::network_a(0.1).unwrap();
        let p = DiscreteBelief::point(42, 20);
        let mut readings = vec![Reading::Erased; 41];
        readings[4] = Reading::Value(1.0);
        let mut timers = vec![1; 41];
        timers[4] = 0;
        let err = belief_update(&p, &a, &awake_obs(readings), &SleepState::new(timers)).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { sensor: 5 }), "{err}");
        let exit = Observation { readings: vec![Reading::Erased; 41], exited: true };
        let err = belief_update(&p, &a, &exit, &SleepState::new(vec![1; 41])).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { sensor: 42 }));
    }

    #[test]
    fn estimator_examples() {
        let h = DistanceMeasure::hamming();
        let coords = [1.0, 2.0, 3.0];
        assert_eq!(estimate_discrete(&[0.7, 0.2, 0.1], &coords, &h).unwrap(), 1.0);
        assert_eq!(estimate_discrete(&[0.5, 0.5], &coords[..2], &h).unwrap(), 1.0);
        let e = DistanceMeasure::squared_euclidean(100.0).unwrap();
        let third = 1.0 / 3.0;
        assert!((estimate_discrete(&[third; 3], &coords, &e).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(estimate_discrete(&[0.0, 0.0], &coords[..2], &h), Err(Error::EstimatorUndefined)));
    }

    #[test]
    fn tracking_cost_examples() {
        let h = DistanceMeasure::hamming();
        assert!((tracking_cost_discrete(&[0.7, 0.2, 0.1], &[1.0, 2.0, 3.0], &h) - 0.3).abs() < 1e-12);
        assert_eq!(tracking_cost_discrete(&[0.0, 1.0], &[1.0, 2.0], &h), 0.0);
        let e = DistanceMeasure::squared_euclidean(100.0).unwrap();
        assert_eq!(tracking_cost_discrete(&[0.5, 0.5], &[0.0, 2.0], &e), 1.0);
    }

    #[test]
    fn systematic_resampling_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let idx = resample_indices(&[0.25, 0.0, 0.75], 8, &mut rng);
        assert_eq!(idx.iter().filter(|&&i| i == 0).count(), 2);
        assert_eq!(idx.iter().filter(|&&i| i == 1).count(), 0);
        assert_eq!(idx.iter().filter(|&&i| i == 2).count(), 6);
    }

    #[test]
    fn particle_prediction_spreads_by_unit_variance() {
        let c = NetworkModel::network_c(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obs = awake_obs(vec![Reading::Erased; 10]);
        let timers = SleepState::new(vec![1; 10]);
        let mut var_sum = 0.0;
        let trials = 200;
        for _ in 0..trials {
            let mut p = ParticleBelief::point(11.0, DEFAULT_PARTICLES).unwrap();
            for _ in 0..3 {
                p = particle_update(&p, &c, &obs, &timers, &mut rng).unwrap().belief;
                assert_eq!(p.len(), DEFAULT_PARTICLES);
            }
            var_sum += p.moments().unwrap().1;
        }
        let mean_var = var_sum / trials as f64;
        // Resampling shrinks the sample variance slightly below 3.
        assert!((mean_var - 3.0).abs() < 0.25, "{mean_var}");
    }

    #[test]
    fn sharp_sensor_locates_the_object() {
        let mut c = NetworkModel::network_c(0.1).unwrap();
        let sensors = c.sensors().iter().map(|s| crate::model::Sensor::gaussian(s.location, 1e-5).unwrap()).collect();
        c = NetworkModel::new(
            "C-sharp",
            c.space().clone(),
            c.kernel().clone(),
            sensors,
            *c.distance(),
            0.1,
            c.start(),
        )
        .unwrap();
        let truth = 11.5;
        let mut timers = vec![1; 10];
        timers[3] = 0;
        timers[4] = 0;
        let timers = SleepState::new(timers);
        // The cloud resolves the truth only up to particle spacing, so judge
        // the average miss.
        let mut miss = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = c.observe(Position::Point(truth), &timers, &mut rng);
            let p = ParticleBelief::point(11.0, DEFAULT_PARTICLES).unwrap();
            let post = particle_update(&p, &c, &obs, &timers, &mut rng).unwrap();
            assert!(!post.degenerate);
            let mean = post.belief.moments().unwrap().0;
            miss += (mean - truth).abs() / 20.0;
        }
        assert!(miss < 1e-2, "{miss}");
    }
}
