//! Episode simulation, cost accounting, lifetime normalization and
//! tradeoff sweeps over the energy price.
//!
//! Every episode starts with the object at the network's start location,
//! known to the controller, and all sensors awake. Costs are charged from
//! step 1 until the step before the object leaves; per-unit-time figures
//! divide episode totals by the expected lifetime from the start location.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::{belief_update, estimate, particle_update, Belief, DEFAULT_PARTICLES};
use crate::model::{residual_step, NetworkModel, Position, SleepState};
use crate::policy::{Controller, PolicyKind};
use crate::tdelta::{build_table, learn_step, Baseline, TDeltaTable, DEFAULT_SAMPLES, DEFAULT_STEP};

/// Episodes longer than this are treated as a misconfigured kernel.
pub const STEP_CAP: u64 = 1_000_000;

/// Monte-Carlo episodes used to estimate the lifetime of a continuous
/// network.
pub const LIFETIME_RUNS: usize = 100_000;

/// One in-network step. Step 0 is the known start and carries no cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    pub location: f64,
    pub estimate: f64,
    pub awake: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub tracking: f64,
    pub energy: f64,
    /// Awake sensors summed over charged steps.
    pub awake_steps: u64,
    /// Step at which the object was first seen outside the network.
    pub duration: u64,
    /// Steps where the particle filter fell back to prediction.
    pub degenerate_steps: u64,
    pub trace: Option<Vec<TraceStep>>,
}

impl EpisodeResult {
    pub fn total(&self) -> f64 {
        self.tracking + self.energy
    }
}

/// Online `T^Δ` learning inside an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Learning {
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub particles: usize,
    pub trace: bool,
    pub step_cap: u64,
    pub learning: Option<Learning>,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self { particles: DEFAULT_PARTICLES, trace: false, step_cap: STEP_CAP, learning: None }
    }
}

/// Simulates one episode. With learning enabled the controller's table is
/// updated after every filter step.
pub fn run_episode<R: Rng + ?Sized>(
    model: &NetworkModel,
    controller: &mut Controller,
    options: &EpisodeOptions,
    rng: &mut R,
) -> Result<EpisodeResult> {
    let n = model.sensor_count();
    let price = model.energy_price();
    let mut pos = model.start();
    let mut belief = Belief::initial(model, options.particles)?;
    let mut timers = SleepState::all_awake(n);
    let mut inputs = controller.act(model, &belief, &timers, rng)?;
    let mut result = EpisodeResult {
        tracking: 0.0,
        energy: 0.0,
        awake_steps: 0,
        duration: 0,
        degenerate_steps: 0,
        trace: options.trace.then(Vec::new),
    };
    if let Some(trace) = result.trace.as_mut() {
        // The start is known and step 0 is not charged.
        let b0 = model.coordinate(pos).expect("start is in the network");
        trace.push(TraceStep { step: 0, location: b0, estimate: b0, awake: n, cost: 0.0 });
    }
    let mut k = 0u64;
    loop {
        k += 1;
        if k > options.step_cap {
            return Err(Error::RunawayEpisode(options.step_cap));
        }
        pos = model.sample_motion(pos, rng);
        timers = residual_step(&timers, &inputs)?;
        let obs = model.observe(pos, &timers, rng);
        if obs.exited {
            result.duration = k;
            return Ok(result);
        }
        let next = match &belief {
            Belief::Discrete(p) => Belief::Discrete(belief_update(p, model, &obs, &timers)?),
            Belief::Particles(p) => {
                let step = particle_update(p, model, &obs, &timers, rng)?;
                result.degenerate_steps += u64::from(step.degenerate);
                Belief::Particles(step.belief)
            }
        };
        // A zero step leaves the table unchanged; skipping it also keeps the
        // random stream identical to a run without learning.
        if let Some(learning) = options.learning.filter(|l| l.alpha > 0.0) {
            let (Belief::Discrete(prev), Belief::Discrete(now)) = (&belief, &next) else {
                return Err(Error::Unsupported("learning T^Δ needs a finite state space".into()));
            };
            let table = controller
                .table_mut()
                .ok_or_else(|| invalid("learning needs a policy with a T^Δ table"))?;
            learn_step(table, model, prev, now, &obs, &timers, learning.alpha, rng)?;
        }
        belief = next;
        let b = model.coordinate(pos).expect("object is in the network");
        let b_hat = estimate(&belief, model)?;
        let d = model.distance().eval(b, b_hat);
        let awake = timers.awake_count();
        result.tracking += d;
        result.awake_steps += awake as u64;
        result.energy = price * result.awake_steps as f64;
        if let Some(trace) = result.trace.as_mut() {
            trace.push(TraceStep { step: k, location: b, estimate: b_hat, awake, cost: d + price * awake as f64 });
        }
        inputs = controller.act(model, &belief, &timers, rng)?;
    }
}

/// Expected number of steps until the object leaves, with its standard
/// error (zero when computed exactly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lifetime {
    pub mean: f64,
    pub se: f64,
}

/// Exact lifetime from the start state on finite networks; a Monte-Carlo
/// estimate with [`LIFETIME_RUNS`] runs on continuous ones.
pub fn expected_lifetime(model: &NetworkModel) -> Result<Lifetime> {
    expected_lifetime_mc(model, LIFETIME_RUNS, 0)
}

/// Like [`expected_lifetime`] with an explicit run count and seed for the
/// continuous case.
pub fn expected_lifetime_mc(model: &NetworkModel, runs: usize, seed: u64) -> Result<Lifetime> {
    match model.start() {
        Position::Cell(i) => {
            let t = model.matrix()?.absorption_times()?;
            Ok(Lifetime { mean: t[i], se: 0.0 })
        }
        Position::Point(_) => {
            if runs < 2 {
                return Err(invalid("need at least two runs to estimate a lifetime"));
            }
            let durations = (0..runs)
                .into_par_iter()
                .map(|r| {
                    let mut rng = episode_rng(seed, u32::MAX, r as u32);
                    let mut pos = model.start();
                    let mut k = 0u64;
                    while !pos.is_terminal() {
                        k += 1;
                        if k > STEP_CAP {
                            return Err(Error::RunawayEpisode(STEP_CAP));
                        }
                        pos = model.sample_motion(pos, &mut rng);
                    }
                    Ok(k as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, se) = mean_se(&durations);
            Ok(Lifetime { mean, se })
        }
        Position::Terminal => Err(invalid("the start cannot be the terminal state")),
    }
}

/// Default sleep cap: twice the expected lifetime, rounded up.
pub fn default_u_max(lifetime: &Lifetime) -> usize {
    (2.0 * lifetime.mean).ceil() as usize
}

/// RNG stream for run `run` at grid point `point`.
pub fn episode_rng(seed: u64, point: u32, run: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(point) << 32) | u64::from(run));
    rng
}

/// Sample mean and standard error; one sample gives an infinite error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One point of a tradeoff curve, in the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub network: String,
    pub policy: String,
    pub tdelta_source: String,
    pub c: f64,
    pub tracking_per_time: f64,
    pub tracking_se: f64,
    pub energy_per_time: f64,
    pub energy_se: f64,
    pub runs: usize,
    pub seed: u64,
    /// Mean realized duration and its standard error.
    #[serde(skip)]
    pub duration: (f64, f64),
    /// Episodes with at least one particle-filter fallback.
    #[serde(skip)]
    pub degenerate_runs: usize,
}

impl TradeoffPoint {
    pub fn total_per_time(&self) -> f64 {
        self.tracking_per_time + self.energy_per_time
    }

    pub fn total_se(&self) -> f64 {
        self.tracking_se.hypot(self.energy_se)
    }
}

/// Label of a tradeoff curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveLabel<'a> {
    pub network: &'a str,
    pub policy: &'a str,
    pub source: &'a str,
    pub seed: u64,
}

/// Averages episodes into a point, normalizing by `lifetime`.
pub fn summarize(label: &CurveLabel<'_>, price: f64, lifetime: f64, episodes: &[EpisodeResult]) -> TradeoffPoint {
    let tracking: Vec<f64> = episodes.iter().map(|e| e.tracking / lifetime).collect();
    let energy: Vec<f64> = episodes.iter().map(|e| e.energy / lifetime).collect();
    let durations: Vec<f64> = episodes.iter().map(|e| e.duration as f64).collect();
    let (t, tse) = mean_se(&tracking);
    let (e, ese) = mean_se(&energy);
    TradeoffPoint {
        network: label.network.to_string(),
        policy: label.policy.to_string(),
        tdelta_source: label.source.to_string(),
        c: price,
        tracking_per_time: t,
        tracking_se: tse,
        energy_per_time: e,
        energy_se: ese,
        runs: episodes.len(),
        seed: label.seed,
        duration: mean_se(&durations),
        degenerate_runs: episodes.iter().filter(|e| e.degenerate_steps > 0).count(),
    }
}

/// Runs `runs` independent episodes in parallel with a fixed controller.
pub fn run_batch(
    model: &NetworkModel,
    controller: &Controller,
    runs: usize,
    seed: u64,
    point: u32,
    options: &EpisodeOptions,
) -> Result<Vec<EpisodeResult>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = episode_rng(seed, point, r as u32);
            let mut c = controller.clone();
            run_episode(model, &mut c, options, &mut rng)
        })
        .collect()
}

/// Learning schedule: discarded warm-up runs, recorded runs, Q_MDP re-solve
/// cadence and step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub warmup: usize,
    pub recorded: usize,
    pub cadence: usize,
    pub alpha: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { warmup: 100, recorded: 50, cadence: 5, alpha: DEFAULT_STEP }
    }
}

/// Outcome of a learning campaign.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub table: TDeltaTable,
    /// Recorded episodes, in order.
    pub episodes: Vec<EpisodeResult>,
}

/// Runs warm-up and recorded episodes sequentially, learning throughout.
/// Recorded run `r` uses the same stream as run `r` of a plain batch at the
/// same grid point.
pub fn run_learning_campaign(
    model: &NetworkModel,
    kind: PolicyKind,
    init: TDeltaTable,
    u_max: usize,
    schedule: &Schedule,
    seed: u64,
    point: u32,
    options: &EpisodeOptions,
) -> Result<Campaign> {
    if !kind.uses_table() {
        return Err(invalid("only table-driven policies can learn"));
    }
    if schedule.cadence == 0 {
        return Err(invalid("re-solve cadence must be at least 1"));
    }
    let mut controller = Controller::build(kind, model, Some(init), u_max)?;
    let options = EpisodeOptions { learning: Some(Learning { alpha: schedule.alpha }), ..*options };
    let mut episodes = Vec::with_capacity(schedule.recorded);
    let total = schedule.warmup + schedule.recorded;
    for e in 0..total {
        let mut rng = if e < schedule.warmup {
            episode_rng(seed ^ WARMUP_SALT, point, e as u32)
        } else {
            episode_rng(seed, point, (e - schedule.warmup) as u32)
        };
        let result = run_episode(model, &mut controller, &options, &mut rng)?;
        if e >= schedule.warmup {
            episodes.push(result);
        }
        if kind == PolicyKind::Qmdp && (e + 1) % schedule.cadence == 0 && e + 1 < total {
            controller.resolve(model)?;
        }
    }
    let table = controller.table().cloned().expect("table-driven policy");
    Ok(Campaign { table, episodes })
}

const WARMUP_SALT: u64 = 0x5EED_0000_0000_0001;

/// Where a curve's `T^Δ` table comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    /// Reference policies need none.
    None,
    Asleep,
    Greedy,
    /// Greedy start refined by a learning campaign.
    Learned,
    File(TDeltaTable),
}

impl TableSource {
    pub fn label(&self) -> &'static str {
        match self {
            TableSource::None => "none",
            TableSource::Asleep => "asleep",
            TableSource::Greedy => "greedy",
            TableSource::Learned => "learned",
            TableSource::File(_) => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub policy: PolicyKind,
    pub source: TableSource,
}

/// Everything a sweep needs besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub curves: Vec<CurveSpec>,
    pub prices: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub samples: usize,
    pub u_max: Option<usize>,
    pub schedule: Schedule,
    pub options: EpisodeOptions,
}

impl SweepConfig {
    pub fn new(curves: Vec<CurveSpec>, prices: Vec<f64>, runs: usize, seed: u64) -> Self {
        Self {
            curves,
            prices,
            runs,
            seed,
            samples: DEFAULT_SAMPLES,
            u_max: None,
            schedule: Schedule::default(),
            options: EpisodeOptions::default(),
        }
    }
}

/// Checks a price grid: non-empty, positive, strictly increasing.
pub fn validate_prices(prices: &[f64]) -> Result<()> {
    if prices.is_empty() {
        return Err(Error::Config("the price grid is empty".into()));
    }
    if prices.iter().any(|&c| !(c > 0.0 && c.is_finite())) || prices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("prices must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Simulates every curve at every price. Tables are rebuilt per price where
/// they depend on it; the all-asleep baseline is built once.
pub fn sweep(model: &NetworkModel, config: &SweepConfig) -> Result<Vec<TradeoffPoint>> {
    validate_prices(&config.prices)?;
    if config.curves.is_empty() {
        return Err(Error::Config("no policies to simulate".into()));
    }
    if config.runs == 0 {
        return Err(Error::Config("need at least one run per point".into()));
    }
    let lifetime = expected_lifetime_mc(model, LIFETIME_RUNS, config.seed)?;
    let u_max = config.u_max.unwrap_or_else(|| default_u_max(&lifetime));
    let asleep_table = if config.curves.iter().any(|c| c.source == TableSource::Asleep) {
        Some(build_table(model, Baseline::Asleep, config.samples, config.seed)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for (ci, &price) in config.prices.iter().enumerate() {
        let priced = model.with_energy_price(price)?;
        let point = ci as u32;
        let mut greedy: Option<TDeltaTable> = None;
        for curve in &config.curves {
            let label = CurveLabel {
                network: model.name(),
                policy: curve.policy.as_str(),
                source: if curve.policy.uses_table() { curve.source.label() } else { "none" },
                seed: config.seed,
            };
            let mut greedy_table = || -> Result<TDeltaTable> {
                if greedy.is_none() {
                    greedy = Some(build_table(&priced, Baseline::Greedy, config.samples, config.seed)?);
                }
                Ok(greedy.clone().expect("just built"))
            };
            let table = if curve.policy.uses_table() {
                match &curve.source {
                    TableSource::None => {
                        return Err(Error::Config(format!("policy {} needs a T^Δ source", curve.policy.as_str())))
                    }
                    TableSource::Asleep => asleep_table.clone(),
                    TableSource::Greedy | TableSource::Learned => Some(greedy_table()?),
                    TableSource::File(t) => Some(t.clone()),
                }
            } else {
                None
            };
            let episodes = if curve.source == TableSource::Learned && curve.policy.uses_table() {
                let init = table.expect("learned curves start from a table");
                let campaign = run_learning_campaign(
                    &priced,
                    curve.policy,
                    init,
                    u_max,
                    &config.schedule,
                    config.seed,
                    point,
                    &config.options,
                )?;
                campaign.episodes
            } else {
                let controller = Controller::build(curve.policy, &priced, table, u_max)?;
                run_batch(&priced, &controller, config.runs, config.seed, point, &config.options)?
            };
            out.push(summarize(&label, price, lifetime.mean, &episodes));
        }
    }
    Ok(out)
}
