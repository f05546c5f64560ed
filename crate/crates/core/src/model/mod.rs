//! Domain types for the tracking problem: where the object can be, how it
//! moves, what the sensors report, what errors cost, and the three reference
//! networks.
//!
//! Finite networks index their in-network states `0..m` in increasing
//! coordinate order; index `m` is the absorbing terminal state that the
//! object enters when it leaves the network.

mod kernel;
mod sensor;

pub use kernel::{gaussian_exit_probability, gaussian_step, normal_tail, MotionKernel, TransitionMatrix};
pub use sensor::{Observation, Reading, Sensor, SensorKind, PEAK_SIGNAL};

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Sensor locations of networks B and C.
pub const NETWORK_B_SENSORS: [f64; 10] = [1.36, 1.61, 3.91, 8.09, 11.96, 13.39, 13.52, 13.66, 16.60, 18.68];

/// One-sided step probabilities of network B for moves of 0, 1, 2 and 3
/// cells. Each non-zero magnitude is taken once to the left and once to the
/// right.
pub const NETWORK_B_STEPS: [f64; 4] = [0.3125, 0.2344, 0.0938, 0.0156];

#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace {
    /// `m` locations with strictly increasing coordinates.
    Finite { coords: Vec<f64> },
    /// The closed interval `[lo, hi]`.
    Continuous { lo: f64, hi: f64 },
}

impl StateSpace {
    pub fn finite(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Model("a finite state space needs at least one location".into()));
        }
        if coords.windows(2).any(|w| w[1] <= w[0]) || coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Model("location coordinates must be finite and strictly increasing".into()));
        }
        Ok(Self::Finite { coords })
    }

    pub fn continuous(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Model(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self::Continuous { lo, hi })
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite { .. })
    }

    /// Number of in-network states, `None` for a continuum.
    pub fn size(&self) -> Option<usize> {
        match self {
            Self::Finite { coords } => Some(coords.len()),
            Self::Continuous { .. } => None,
        }
    }

    /// In-network coordinates of a finite space (empty for a continuum).
    pub fn coords(&self) -> &[f64] {
        match self {
            Self::Finite { coords } => coords,
            Self::Continuous { .. } => &[],
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Finite { coords } => (coords[0], coords[coords.len() - 1]),
            Self::Continuous { lo, hi } => (*lo, *hi),
        }
    }

    /// Index of the finite location at coordinate `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let coords = self.coords();
        let i = coords.partition_point(|&c| c < x - 1e-9);
        (i < coords.len() && (coords[i] - x).abs() <= 1e-9).then_some(i)
    }
}

/// Object position as the motion kernel sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    /// In-network state index of a finite network.
    Cell(usize),
    /// Coordinate on a continuum.
    Point(f64),
    Terminal,
}

impl Position {
    pub fn is_terminal(self) -> bool {
        matches!(self, Position::Terminal)
    }
}

/// Object position in coordinates, used by costs and sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    At(f64),
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Hamming,
    SquaredEuclidean,
}

/// Tracking cost between the true and the estimated location, together with
/// a finite upper bound on its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMeasure {
    pub kind: DistanceKind,
    pub bound: f64,
}

impl DistanceMeasure {
    pub fn hamming() -> Self {
        Self { kind: DistanceKind::Hamming, bound: 1.0 }
    }

    pub fn squared_euclidean(bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(invalid(format!("distance bound must be positive and finite, got {bound}")));
        }
        Ok(Self { kind: DistanceKind::SquaredEuclidean, bound })
    }

    /// Cost between two coordinates, clipped to the bound.
    pub fn eval(&self, b: f64, estimate: f64) -> f64 {
        match self.kind {
            DistanceKind::Hamming => {
                if (b - estimate).abs() <= 1e-9 {
                    0.0
                } else {
                    1.0
                }
            }
            DistanceKind::SquaredEuclidean => ((estimate - b) * (estimate - b)).min(self.bound),
        }
    }

    /// Cost of estimating `estimate` when the object is at `b`. The caller
    /// handles the terminal state, where no cost is charged.
    pub fn distance(&self, b: Location, estimate: Location) -> Result<f64> {
        match (b, estimate) {
            (Location::At(b), Location::At(e)) => Ok(self.eval(b, e)),
            _ => Err(invalid("distance is undefined at the terminal state")),
        }
    }
}

/// Sentinel sleep input that keeps a sensor asleep for the rest of any
/// realistic episode.
pub const SLEEP_FOREVER: u32 = u32::MAX;

/// Residual sleep timers of the real sensors. The virtual exit sensor is
/// implicit and always awake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SleepState {
    timers: Vec<u32>,
}

impl SleepState {
    pub fn all_awake(n: usize) -> Self {
        Self { timers: vec![0; n] }
    }

    pub fn new(timers: Vec<u32>) -> Self {
        Self { timers }
    }

    /// Accepts signed timers as they come from text input.
    pub fn from_signed(timers: &[i64]) -> Result<Self> {
        timers
            .iter()
            .map(|&t| u32::try_from(t).map_err(|_| invalid(format!("sleep timer {t} is not a valid timer"))))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn timers(&self) -> &[u32] {
        &self.timers
    }

    pub fn len(&self) -> usize {
        self.timers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timers.is_empty()
    }

    pub fn is_awake(&self, sensor: usize) -> bool {
        self.timers[sensor] == 0
    }

    pub fn awake_count(&self) -> usize {
        self.timers.iter().filter(|&&t| t == 0).count()
    }

    /// Advances the timers one step: sleeping sensors count down and awake
    /// sensors adopt their sleep input.
    pub fn step(&self, inputs: &[u32]) -> Result<SleepState> {
        residual_step(self, inputs)
    }
}

/// Timer recursion `r' = (r - 1)·1{r > 0} + u·1{r = 0}`.
pub fn residual_step(r: &SleepState, u: &[u32]) -> Result<SleepState> {
    if u.len() != r.timers.len() {
        return Err(invalid(format!(
            "got {} sleep inputs for {} sensors",
            u.len(),
            r.timers.len()
        )));
    }
    let timers = r
        .timers
        .iter()
        .zip(u)
        .map(|(&t, &input)| if t > 0 { t - 1 } else { input })
        .collect();
    Ok(SleepState { timers })
}

/// Complete description of a tracking network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    name: String,
    space: StateSpace,
    kernel: MotionKernel,
    sensors: Vec<Sensor>,
    distance: DistanceMeasure,
    energy_price: f64,
    start: Position,
}

impl NetworkModel {
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        kernel: MotionKernel,
        sensors: Vec<Sensor>,
        distance: DistanceMeasure,
        energy_price: f64,
        start: Position,
    ) -> Result<Self> {
        if !(energy_price > 0.0 && energy_price.is_finite()) {
            return Err(Error::Config(format!("energy price must be positive, got {energy_price}")));
        }
        if sensors.is_empty() {
            return Err(Error::Config("a network needs at least one sensor".into()));
        }
        match (&space, &kernel) {
            (StateSpace::Finite { coords }, MotionKernel::Matrix(p)) => {
                if p.in_network() != coords.len() {
                    return Err(Error::Config(format!(
                        "kernel covers {} states but the space has {}",
                        p.in_network(),
                        coords.len()
                    )));
                }
                match start {
                    Position::Cell(i) if i < coords.len() => {}
                    _ => return Err(Error::Config("start must be an in-network cell".into())),
                }
            }
            (StateSpace::Continuous { lo, hi }, MotionKernel::Gaussian { .. }) => {
                if distance.kind == DistanceKind::Hamming {
                    return Err(Error::Config("Hamming cost needs a finite state space".into()));
                }
                match start {
                    Position::Point(x) if (*lo..=*hi).contains(&x) => {}
                    _ => return Err(Error::Config("start must be a point inside the interval".into())),
                }
            }
            _ => return Err(Error::Config("motion kernel does not match the state space".into())),
        }
        let (lo, hi) = space.bounds();
        for (l, s) in sensors.iter().enumerate() {
            if !(lo - 1.0..=hi + 1.0).contains(&s.location) {
                return Err(Error::Config(format!(
                    "sensor {} at {} lies outside the network",
                    l + 1,
                    s.location
                )));
            }
            if s.kind == SensorKind::PerfectBinary && space.is_finite() && space.index_of(s.location).is_none() {
                return Err(Error::Config(format!(
                    "binary sensor {} must sit on a network location",
                    l + 1
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            space,
            kernel,
            sensors,
            distance,
            energy_price,
            start,
        })
    }

    /// Network A: 41 cells, symmetric ±1 walk, a perfect binary sensor on
    /// every cell, Hamming cost.
    pub fn network_a(energy_price: f64) -> Result<Self> {
        let m = 41;
        let coords: Vec<f64> = (1..=m).map(f64::from).collect();
        let kernel = TransitionMatrix::from_steps(m as usize, &[(-1, 0.5), (1, 0.5)])?;
        let sensors = coords.iter().map(|&x| Sensor::perfect(x)).collect();
        Self::new(
            "A",
            StateSpace::finite(coords)?,
            MotionKernel::Matrix(kernel),
            sensors,
            DistanceMeasure::hamming(),
            energy_price,
            Position::Cell(20),
        )
    }

    /// Network B: 21 cells, steps of up to three cells, ten Gaussian sensors,
    /// Hamming cost.
    pub fn network_b(energy_price: f64) -> Result<Self> {
        let coords: Vec<f64> = (1..=21).map(f64::from).collect();
        let kernel = TransitionMatrix::from_steps(21, &network_b_steps())?;
        Self::new(
            "B",
            StateSpace::finite(coords)?,
            MotionKernel::Matrix(kernel),
            reference_gaussian_sensors()?,
            DistanceMeasure::hamming(),
            energy_price,
            Position::Cell(10),
        )
    }

    /// Network C: Brownian motion on `[1, 21]` with unit step variance, the
    /// network B sensors, squared-Euclidean cost.
    pub fn network_c(energy_price: f64) -> Result<Self> {
        Self::new(
            "C",
            StateSpace::continuous(1.0, 21.0)?,
            MotionKernel::gaussian(1.0)?,
            reference_gaussian_sensors()?,
            DistanceMeasure::squared_euclidean(400.0)?,
            energy_price,
            Position::Point(11.0),
        )
    }

    /// Builds one of the reference networks by name.
    pub fn builtin(name: &str, energy_price: f64) -> Result<Self> {
        match name {
            "A" | "a" => Self::network_a(energy_price),
            "B" | "b" => Self::network_b(energy_price),
            "C" | "c" => Self::network_c(energy_price),
            other => Err(Error::Config(format!("unknown network {other:?}; expected A, B or C"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn kernel(&self) -> &MotionKernel {
        &self.kernel
    }

    /// Transition matrix of a finite network.
    pub fn matrix(&self) -> Result<&TransitionMatrix> {
        self.kernel
            .matrix()
            .ok_or_else(|| Error::Unsupported("operation needs a finite state space".into()))
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn distance(&self) -> &DistanceMeasure {
        &self.distance
    }

    pub fn energy_price(&self) -> f64 {
        self.energy_price
    }

    pub fn start(&self) -> Position {
        self.start
    }

    pub fn with_energy_price(&self, energy_price: f64) -> Result<Self> {
        if !(energy_price > 0.0 && energy_price.is_finite()) {
            return Err(Error::Config(format!("energy price must be positive, got {energy_price}")));
        }
        Ok(Self { energy_price, ..self.clone() })
    }

    pub fn location(&self, pos: Position) -> Location {
        match pos {
            Position::Cell(i) => Location::At(self.space.coords()[i]),
            Position::Point(x) => Location::At(x),
            Position::Terminal => Location::Terminal,
        }
    }

    pub fn coordinate(&self, pos: Position) -> Option<f64> {
        match self.location(pos) {
            Location::At(x) => Some(x),
            Location::Terminal => None,
        }
    }

    /// Samples the object's next position.
    pub fn sample_motion<R: Rng + ?Sized>(&self, pos: Position, rng: &mut R) -> Position {
        match (&self.kernel, pos) {
            (_, Position::Terminal) => Position::Terminal,
            (MotionKernel::Matrix(p), Position::Cell(i)) => {
                let j = p.sample(i, rng);
                if j == p.terminal() {
                    Position::Terminal
                } else {
                    Position::Cell(j)
                }
            }
            (MotionKernel::Gaussian { variance }, Position::Point(x)) => {
                let (lo, hi) = self.space.bounds();
                gaussian_step(x, *variance, lo, hi, rng).map_or(Position::Terminal, Position::Point)
            }
            (_, other) => panic!("position {other:?} does not belong to network {}", self.name),
        }
    }

    /// Draws the observation vector for an object at `pos` given the timers
    /// in force at observation time.
    pub fn observe<R: Rng + ?Sized>(&self, pos: Position, timers: &SleepState, rng: &mut R) -> Observation {
        let b = self.coordinate(pos);
        let readings = self
            .sensors
            .iter()
            .zip(timers.timers())
            .map(|(s, &t)| if t > 0 { Reading::Erased } else { Reading::Value(s.sample(b, rng)) })
            .collect();
        Observation { readings, exited: pos.is_terminal() }
    }

    /// `p P^t` for a probability vector over the `m + 1` finite states.
    pub fn kernel_predict(&self, p: &[f64], t: usize) -> Result<Vec<f64>> {
        let matrix = self.matrix()?;
        if p.len() != matrix.size() {
            return Err(invalid(format!("belief has {} entries, expected {}", p.len(), matrix.size())));
        }
        let mut cur = p.to_vec();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..t {
            matrix.predict_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }
}

fn network_b_steps() -> Vec<(i64, f64)> {
    let mut steps = vec![(0, NETWORK_B_STEPS[0])];
    for (k, &p) in NETWORK_B_STEPS.iter().enumerate().skip(1) {
        steps.push((-(k as i64), p));
        steps.push((k as i64, p));
    }
    steps
}

fn reference_gaussian_sensors() -> Result<Vec<Sensor>> {
    NETWORK_B_SENSORS.iter().map(|&x| Sensor::gaussian(x, 1.0)).collect()
}
