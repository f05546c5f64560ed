//! Tracking-cost increment tables `T^Δ(b, ℓ)`: how much expected tracking
//! cost rises when sensor `ℓ` sleeps while the object was at `b` one step
//! earlier.
//!
//! Tables come from one-step Monte-Carlo experiments around a baseline awake
//! set (all asleep, or a greedy selection priced at `c`), or are refined
//! online by a Robbins-Monro fit of predicted against observed increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filter::{condition, tracking_cost_discrete, DiscreteBelief};
use crate::model::{DistanceMeasure, Location, MotionKernel, NetworkModel, Observation, Position, Reading, SleepState};

/// Monte-Carlo samples per table row when none are given.
pub const DEFAULT_SAMPLES: usize = 200;

/// Default Robbins-Monro step size.
pub const DEFAULT_STEP: f64 = 0.01;

/// Quadrature half-width, in motion standard deviations, for one-step
/// posteriors on a continuum.
const GRID_HALF_WIDTH: f64 = 6.0;
/// Quadrature points per motion standard deviation.
const GRID_DENSITY: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AsleepBaseline,
    GreedyBaseline,
    Learned,
    File,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::AsleepBaseline => "asleep",
            Provenance::GreedyBaseline => "greedy",
            Provenance::Learned => "learned",
            Provenance::File => "file",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "asleep" => Ok(Self::AsleepBaseline),
            "greedy" => Ok(Self::GreedyBaseline),
            "learned" => Ok(Self::Learned),
            "file" => Ok(Self::File),
            other => Err(Error::Parse(format!("unknown table provenance {other:?}"))),
        }
    }
}

/// Baseline awake set used to build a table by simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Asleep,
    Greedy,
}

/// `T^Δ` values, one row per anchor (every location of a finite network, or
/// chosen points of a continuum) and one column per real sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TDeltaTable {
    anchors: Vec<f64>,
    sensors: usize,
    values: Vec<f64>,
    interpolate: bool,
    provenance: Provenance,
    bound: f64,
}

impl TDeltaTable {
    /// Builds a table from row-major values. Entries are clamped to
    /// `[0, bound]`.
    pub fn new(
        anchors: Vec<f64>,
        sensors: usize,
        values: Vec<f64>,
        interpolate: bool,
        provenance: Provenance,
        bound: f64,
    ) -> Result<Self> {
        if anchors.is_empty() || sensors == 0 {
            return Err(invalid("a table needs at least one row and one sensor"));
        }
        if anchors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("anchor coordinates must be strictly increasing"));
        }
        if values.len() != anchors.len() * sensors {
            return Err(invalid(format!(
                "table has {} values, expected {}x{}",
                values.len(),
                anchors.len(),
                sensors
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, bound)).collect();
        Ok(Self { anchors, sensors, values, interpolate, provenance, bound })
    }

    /// Constant table shaped for `model`.
    pub fn constant(model: &NetworkModel, value: f64) -> Result<Self> {
        let anchors = table_anchors(model);
        let len = anchors.len() * model.sensor_count();
        Self::new(
            anchors,
            model.sensor_count(),
            vec![value; len],
            !model.space().is_finite(),
            Provenance::File,
            model.distance().bound,
        )
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn rows(&self) -> usize {
        self.anchors.len()
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolates(&self) -> bool {
        self.interpolate
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn get(&self, row: usize, sensor: usize) -> f64 {
        self.values[row * self.sensors + sensor]
    }

    pub fn set(&mut self, row: usize, sensor: usize, value: f64) {
        self.values[row * self.sensors + sensor] = value.clamp(0.0, self.bound);
    }

    /// Values of one sensor across all rows.
    pub fn column(&self, sensor: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, sensor)).collect()
    }

    /// `T^Δ(b, ℓ)` at a coordinate: lookup on finite tables, linear
    /// interpolation between anchors (clamped outside them) otherwise.
    pub fn eval_at(&self, x: f64, sensor: usize) -> f64 {
        let a = &self.anchors;
        if !self.interpolate {
            let i = a.partition_point(|&c| c < x - 1e-9).min(a.len() - 1);
            let i = if i > 0 && (a[i] - x).abs() > (a[i - 1] - x).abs() { i - 1 } else { i };
            return self.get(i, sensor);
        }
        if x <= a[0] {
            return self.get(0, sensor);
        }
        if x >= a[a.len() - 1] {
            return self.get(a.len() - 1, sensor);
        }
        let hi = a.partition_point(|&c| c <= x);
        let lo = hi - 1;
        let w = (x - a[lo]) / (a[hi] - a[lo]);
        (1.0 - w) * self.get(lo, sensor) + w * self.get(hi, sensor)
    }

    pub fn eval(&self, b: Location, sensor: usize) -> Result<f64> {
        match b {
            Location::At(x) => Ok(self.eval_at(x, sensor)),
            Location::Terminal => Err(invalid("T^Δ is undefined at the terminal state")),
        }
    }
}

/// Rows used for `model`'s tables: every location of a finite network,
/// every integer point of a continuum.
pub fn table_anchors(model: &NetworkModel) -> Vec<f64> {
    if model.space().is_finite() {
        model.space().coords().to_vec()
    } else {
        let (lo, hi) = model.space().bounds();
        let mut x = lo.ceil();
        let mut out = Vec::new();
        while x <= hi {
            out.push(x);
            x += 1.0;
        }
        out
    }
}

/// Mean of a Monte-Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::INFINITY
        };
        Self { mean, se }
    }
}

/// Common random numbers for one step from a known location: sampled next
/// positions and, for each, every sensor's log-likelihood over the
/// posterior support.
pub struct OneStep {
    coords: Vec<f64>,
    log_prior: Vec<f64>,
    sensors: usize,
    /// `None` for samples where the object left the network.
    samples: Vec<Option<Vec<f64>>>,
    distance: DistanceMeasure,
}

impl OneStep {
    /// Simulates `n_mc` one-step transitions from `from`, drawing a reading
    /// for every sensor on each.
    pub fn simulate<R: Rng + ?Sized>(model: &NetworkModel, from: Position, n_mc: usize, rng: &mut R) -> Result<Self> {
        if n_mc == 0 {
            return Err(invalid("need at least one Monte-Carlo sample"));
        }
        let (coords, log_prior) = match (model.kernel(), from) {
            (MotionKernel::Matrix(p), Position::Cell(i)) => {
                let m = p.in_network();
                let (c, l): (Vec<f64>, Vec<f64>) = p
                    .row(i)
                    .iter()
                    .filter(|(j, _)| *j < m)
                    .map(|&(j, v)| (model.space().coords()[j], v.ln()))
                    .unzip();
                (c, l)
            }
            (MotionKernel::Gaussian { variance }, Position::Point(x)) => {
                let (lo, hi) = model.space().bounds();
                let sd = variance.sqrt();
                let a = (x - GRID_HALF_WIDTH * sd).max(lo);
                let b = (x + GRID_HALF_WIDTH * sd).min(hi);
                let h = sd / GRID_DENSITY;
                let count = ((b - a) / h).floor() as usize + 1;
                let coords: Vec<f64> = (0..count).map(|k| a + k as f64 * h).collect();
                let lp = coords.iter().map(|&y| -0.5 * (y - x) * (y - x) / variance).collect();
                (coords, lp)
            }
            _ => return Err(invalid("one-step experiments start from an in-network position")),
        };
        let sensors = model.sensor_count();
        let mut samples = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let next = match (model.kernel(), from) {
                (MotionKernel::Gaussian { variance }, Position::Point(x)) => {
                    let z: f64 = StandardNormal.sample(rng);
                    let y = x + variance.sqrt() * z;
                    let (lo, hi) = model.space().bounds();
                    if (lo..=hi).contains(&y) {
                        Position::Point(y)
                    } else {
                        Position::Terminal
                    }
                }
                _ => model.sample_motion(from, rng),
            };
            let Some(b) = model.coordinate(next) else {
                samples.push(None);
                continue;
            };
            let mut ll = Vec::with_capacity(sensors * coords.len());
            for s in model.sensors() {
                let r = s.sample(Some(b), rng);
                ll.extend(coords.iter().map(|&y| s.log_likelihood(r, y)));
            }
            samples.push(Some(ll));
        }
        Ok(Self { coords, log_prior, sensors, samples, distance: *model.distance() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-sample expected tracking cost of the posterior when exactly the
    /// sensors in `awake` report.
    pub fn costs(&self, awake: &[bool]) -> Vec<f64> {
        let s = self.coords.len();
        let mut logw = vec![0.0; s];
        let mut w = vec![0.0; s];
        self.samples
            .iter()
            .map(|sample| {
                let Some(ll) = sample else { return 0.0 };
                logw.copy_from_slice(&self.log_prior);
                for (l, _) in awake.iter().enumerate().filter(|(_, &a)| a) {
                    logw.iter_mut().zip(&ll[l * s..(l + 1) * s]).for_each(|(a, b)| *a += b);
                }
                let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                w.iter_mut().zip(&logw).for_each(|(w, &lw)| *w = (lw - max).exp());
                tracking_cost_discrete(&w, &self.coords, &self.distance)
            })
            .collect()
    }

    /// Expected tracking cost with `awake` reporting.
    pub fn expected_cost(&self, awake: &[bool]) -> McEstimate {
        McEstimate::from_samples(&self.costs(awake))
    }

    /// `|E[cost(a)] - E[cost(b)]|` from paired samples.
    pub fn cost_gap(&self, a: &[bool], b: &[bool]) -> McEstimate {
        let ca = self.costs(a);
        let cb = self.costs(b);
        let diff: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x - y).collect();
        let est = McEstimate::from_samples(&diff);
        McEstimate { mean: est.mean.abs(), se: est.se }
    }

    /// Greedy baseline: repeatedly wake the sensor with the largest cost
    /// reduction while that reduction is at least `price`. Ties go to the
    /// lower sensor index.
    pub fn greedy_set(&self, price: f64) -> Vec<bool> {
        let mut awake = vec![false; self.sensors];
        let mut current = self.expected_cost(&awake).mean;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for l in 0..self.sensors {
                if awake[l] {
                    continue;
                }
                awake[l] = true;
                let cost = self.expected_cost(&awake).mean;
                awake[l] = false;
                let reduction = current - cost;
                if best.is_none_or(|(_, r)| reduction > r + 1e-12) {
                    best = Some((l, reduction));
                }
            }
            match best {
                Some((l, reduction)) if reduction >= price => {
                    awake[l] = true;
                    current -= reduction;
                }
                _ => return awake,
            }
        }
    }

    /// Table row around a baseline: for each sensor, the cost change from
    /// toggling it.
    pub fn toggle_row(&self, baseline: &[bool]) -> Vec<McEstimate> {
        (0..self.sensors)
            .map(|l| {
                let mut toggled = baseline.to_vec();
                toggled[l] = !toggled[l];
                self.cost_gap(baseline, &toggled)
            })
            .collect()
    }
}

/// `T^Δ(b, ℓ)` with every other sensor asleep.
pub fn tdelta_asleep<R: Rng + ?Sized>(
    model: &NetworkModel,
    b: Position,
    sensor: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if sensor >= model.sensor_count() {
        return Err(invalid(format!("no sensor {}", sensor + 1)));
    }
    let exp = OneStep::simulate(model, b, n_mc, rng)?;
    let asleep = vec![false; model.sensor_count()];
    let mut one = asleep.clone();
    one[sensor] = true;
    Ok(exp.cost_gap(&one, &asleep))
}

/// Greedy baseline set at `b` (priced at the model's energy price) and the
/// table row around it.
pub fn tdelta_greedy<R: Rng + ?Sized>(
    model: &NetworkModel,
    b: Position,
    n_mc: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<McEstimate>)> {
    let exp = OneStep::simulate(model, b, n_mc, rng)?;
    let awake = exp.greedy_set(model.energy_price());
    let row = exp.toggle_row(&awake);
    let set = awake.iter().enumerate().filter(|(_, &a)| a).map(|(l, _)| l).collect();
    Ok((set, row))
}

/// Position of table row `row` of `model`.
fn anchor_position(model: &NetworkModel, anchors: &[f64], row: usize) -> Position {
    if model.space().is_finite() {
        Position::Cell(row)
    } else {
        Position::Point(anchors[row])
    }
}

/// Builds a whole table by simulation. Row `i` draws from its own ChaCha
/// stream so rows are reproducible independently of scheduling.
pub fn build_table(model: &NetworkModel, baseline: Baseline, n_mc: usize, seed: u64) -> Result<TDeltaTable> {
    let anchors = table_anchors(model);
    let rows: Vec<Vec<f64>> = (0..anchors.len())
        .into_par_iter()
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            let exp = OneStep::simulate(model, anchor_position(model, &anchors, row), n_mc, &mut rng)?;
            let base = match baseline {
                Baseline::Asleep => vec![false; model.sensor_count()],
                Baseline::Greedy => exp.greedy_set(model.energy_price()),
            };
            Ok(exp.toggle_row(&base).into_iter().map(|e| e.mean).collect())
        })
        .collect::<Result<_>>()?;
    let provenance = match baseline {
        Baseline::Asleep => Provenance::AsleepBaseline,
        Baseline::Greedy => Provenance::GreedyBaseline,
    };
    TDeltaTable::new(
        anchors,
        model.sensor_count(),
        rows.concat(),
        !model.space().is_finite(),
        provenance,
        model.distance().bound,
    )
}

/// `â_ℓ = Σ_b p_prev(b) T^Δ(b, ℓ)` over in-network states.
pub fn predicted_increase(table: &TDeltaTable, p_prev: &DiscreteBelief, sensor: usize) -> f64 {
    p_prev
        .in_network()
        .iter()
        .enumerate()
        .map(|(b, &p)| p * table.get(b, sensor))
        .sum()
}

/// Gradient of `(â_ℓ - a)²` with respect to the column `T^Δ(·, ℓ)`.
pub fn squared_error_gradient(table: &TDeltaTable, p_prev: &DiscreteBelief, sensor: usize, observed: f64) -> Vec<f64> {
    let err = predicted_increase(table, p_prev, sensor) - observed;
    p_prev.in_network().iter().map(|&p| 2.0 * err * p).collect()
}

/// Observed tracking-cost increase `a_ℓ` attributed to sensor `ℓ` at this
/// step. An awake sensor's reading is dropped from the update; a sleeping
/// sensor gets a simulated reading folded in.
#[allow(clippy::too_many_arguments)]
pub fn observed_increase<R: Rng + ?Sized>(
    model: &NetworkModel,
    p_prev: &DiscreteBelief,
    p_now: &DiscreteBelief,
    obs: &Observation,
    timers: &SleepState,
    sensor: usize,
    rng: &mut R,
) -> Result<f64> {
    if obs.exited || p_now.in_network_mass() <= 0.0 {
        return Ok(0.0);
    }
    let coords = model.space().coords();
    let dm = model.distance();
    let now_cost = tracking_cost_discrete(p_now.in_network(), coords, dm);
    if timers.is_awake(sensor) {
        let mut readings = obs.readings.clone();
        readings[sensor] = Reading::Erased;
        let prior = model.matrix()?.predict(p_prev.probs());
        let without = condition(&prior, model, &readings)?;
        Ok(tracking_cost_discrete(without.in_network(), coords, dm) - now_cost)
    } else {
        let b = sample_index(p_now.in_network(), rng);
        let reading = model.sensors()[sensor].sample(Some(coords[b]), rng);
        let mut readings = vec![Reading::Erased; model.sensor_count()];
        readings[sensor] = Reading::Value(reading);
        let with = condition(p_now.probs(), model, &readings)?;
        Ok(now_cost - tracking_cost_discrete(with.in_network(), coords, dm))
    }
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &v) in p.iter().enumerate() {
        if u < v {
            return i;
        }
        u -= v;
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// One Robbins-Monro step over every sensor column:
/// `T^Δ(b, ℓ) -= 2α p_prev(b) (â_ℓ - a_ℓ)`, clamped to `[0, bound]`.
#[allow(clippy::too_many_arguments)]
pub fn learn_step<R: Rng + ?Sized>(
    table: &mut TDeltaTable,
    model: &NetworkModel,
    p_prev: &DiscreteBelief,
    p_now: &DiscreteBelief,
    obs: &Observation,
    timers: &SleepState,
    alpha: f64,
    rng: &mut R,
) -> Result<()> {
    if !model.space().is_finite() {
        return Err(Error::Unsupported("learning T^Δ needs a finite state space".into()));
    }
    if !(alpha >= 0.0) {
        return Err(invalid(format!("step size must be non-negative, got {alpha}")));
    }
    if table.rows() != model.space().coords().len() || table.sensors() != model.sensor_count() {
        return Err(invalid("table shape does not match the network"));
    }
    for l in 0..table.sensors() {
        let a = observed_increase(model, p_prev, p_now, obs, timers, l, rng)?;
        let grad = squared_error_gradient(table, p_prev, l, a);
        for (b, g) in grad.into_iter().enumerate() {
            if g != 0.0 {
                let v = table.get(b, l) - alpha * g;
                table.set(b, l, v);
            }
        }
    }
    table.provenance = Provenance::Learned;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn interpolation_examples() {
        let t = TDeltaTable::new(vec![1.0, 2.0], 1, vec![0.0, 1.0], true, Provenance::File, 1.0).unwrap();
        assert_eq!(t.eval_at(1.5, 0), 0.5);
        assert_eq!(t.eval_at(2.0, 0), 1.0);
        assert_eq!(t.eval_at(0.5, 0), 0.0);
        assert_eq!(t.eval_at(9.0, 0), 1.0);
        assert!(t.eval(Location::Terminal, 0).is_err());
    }

    #[test]
    fn entries_are_clamped() {
        let t = TDeltaTable::new(vec![1.0], 2, vec![-0.3, 7.0], false, Provenance::File, 1.0).unwrap();
        assert_eq!(t.values(), &[0.0, 1.0]);
        assert!(TDeltaTable::new(vec![2.0, 1.0], 1, vec![0.0, 0.0], false, Provenance::File, 1.0).is_err());
    }

    #[test]
    fn neighbor_sensor_resolves_the_coin_flip() {
        let a = NetworkModel::network_a(0.1).unwrap();
        let near = tdelta_asleep(&a, Position::Cell(20), 19, 400, &mut rng(1)).unwrap();
        // With the object one step left or right of 21 and no readings the
        // cost is 1/2; one neighbor removes it.
        assert!((near.mean - 0.5).abs() < 1e-12, "{near:?}");
        let far = tdelta_asleep(&a, Position::Cell(20), 4, 400, &mut rng(2)).unwrap();
        assert_eq!(far.mean, 0.0);
    }

    #[test]
    fn greedy_baseline_depends_on_price() {
        let a = NetworkModel::network_a(0.1).unwrap();
        let (set, row) = tdelta_greedy(&a, Position::Cell(20), 200, &mut rng(3)).unwrap();
        assert_eq!(set, vec![19]);
        assert!((row[19].mean - 0.5).abs() < 1e-12);
        assert_eq!(row[21].mean, 0.0);
        assert_eq!(row[4].mean, 0.0);
        let pricey = a.with_energy_price(0.6).unwrap();
        let (set, _) = tdelta_greedy(&pricey, Position::Cell(20), 200, &mut rng(3)).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn point_mass_prediction() {
        let t = TDeltaTable::new(vec![1.0, 2.0], 1, vec![0.2, 0.9], false, Provenance::File, 1.0).unwrap();
        let p = DiscreteBelief::point(3, 0);
        assert!((predicted_increase(&t, &p, 0) - 0.2).abs() < 1e-15);
        let g = squared_error_gradient(&t, &p, 0, 0.1);
        // 2 * (0.2 - 0.1) * 1, so a step of 0.01 lowers the entry by 0.002.
        assert!((g[0] - 0.2).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn continuous_table_has_integer_anchors() {
        let c = NetworkModel::network_c(0.1).unwrap();
        let t = build_table(&c, Baseline::Asleep, 20, 7).unwrap();
        assert_eq!(t.rows(), 21);
        assert_eq!(t.sensors(), 10);
        assert!(t.interpolates());
        assert!(t.values().iter().all(|&v| (0.0..=400.0).contains(&v)));
    }

    #[test]
    fn learning_rejects_continuous_models() {
        let c = NetworkModel::network_c(0.1).unwrap();
        let mut t = TDeltaTable::constant(&c, 0.1).unwrap();
        let p = DiscreteBelief::point(3, 0);
        let obs = Observation { readings: vec![Reading::Erased; 10], exited: false };
        let err = learn_step(&mut t, &c, &p, &p, &obs, &SleepState::new(vec![1; 10]), 0.01, &mut rng(0));
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }
}
