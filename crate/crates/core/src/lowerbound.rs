//! Lower bound on the optimal energy/tracking tradeoff for finite networks
//! with Gaussian sensors.
//!
//! The expected Hamming tracking error one step ahead is bounded below by
//! the worst pairwise error of a MAP test between next locations. Splitting
//! that bound across sensors with row-stochastic weights `Λ` and assuming
//! the object is observed after each control gives per-sensor sleep problems
//! whose summed value is a lower bound for every `Λ`; the envelope over `Λ`
//! tightens it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{normal_tail, DistanceKind, NetworkModel, Position, SensorKind};
use crate::policy::{KernelPowers, SleepSubproblem, SubproblemSolution, DEFAULT_MAX_ITER};

/// Means and noise levels of the Gaussian hypothesis test between next
/// locations.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGeometry {
    states: usize,
    sensors: usize,
    /// `means[j * n + ℓ] = m_j(ℓ)`.
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl HypothesisGeometry {
    pub fn new(model: &NetworkModel) -> Result<Self> {
        let coords = model.space().coords();
        if coords.is_empty() {
            return Err(Error::Unsupported("the bound needs a finite state space".into()));
        }
        let variances = model
            .sensors()
            .iter()
            .map(|s| match s.kind {
                SensorKind::Gaussian { variance } => Ok(variance),
                SensorKind::PerfectBinary => Err(Error::Unsupported("the bound needs Gaussian sensors".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        let n = variances.len();
        let mut means = Vec::with_capacity(coords.len() * n);
        for &x in coords {
            means.extend(model.sensors().iter().map(|s| s.mean_signal(x)));
        }
        Ok(Self { states: coords.len(), sensors: n, means, variances })
    }

    pub fn mean(&self, state: usize, sensor: usize) -> f64 {
        self.means[state * self.sensors + sensor]
    }

    /// Normalized distance between the mean vectors of two locations over
    /// the awake sensors.
    pub fn distance(&self, k: usize, j: usize, awake: &[bool]) -> f64 {
        (0..self.sensors)
            .filter(|&l| awake[l])
            .map(|l| {
                let dm = self.mean(k, l) - self.mean(j, l);
                dm * dm / self.variances[l]
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Probability that a likelihood-ratio test with priors `π_j`, `π_k`
/// prefers hypothesis `k` when `j` is true: `Q(d/2 + ln(π_j/π_k)/d)`. At
/// `d = 0` the limits are 1/2 for equal priors and `1{π_k > π_j}` otherwise.
pub fn pairwise_error(d: f64, pi_j: f64, pi_k: f64) -> f64 {
    if d > 0.0 {
        normal_tail(d / 2.0 + (pi_j / pi_k).ln() / d)
    } else if pi_j == pi_k {
        0.5
    } else if pi_k > pi_j {
        1.0
    } else {
        0.0
    }
}

/// Per-state, per-sensor tracking contributions: `t0` with every sensor
/// awake, `t` with sensor `ℓ` asleep and the rest awake. Row-major `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTables {
    pub states: usize,
    pub sensors: usize,
    pub t0: Vec<f64>,
    pub t: Vec<f64>,
}

impl BoundTables {
    pub fn t0(&self, i: usize, l: usize) -> f64 {
        self.t0[i * self.sensors + l]
    }

    pub fn t(&self, i: usize, l: usize) -> f64 {
        self.t[i * self.sensors + l]
    }
}

/// `Σ_j P(i,j) max_{k≠j, π_k>0} pairwise_error(d_kj(awake), π_j, π_k)` with
/// priors `π = P(i, ·)`.
fn expected_pairwise_error(model: &NetworkModel, geo: &HypothesisGeometry, i: usize, awake: &[bool]) -> Result<f64> {
    let matrix = model.matrix()?;
    let m = matrix.in_network();
    let support: Vec<(usize, f64)> = matrix.row(i).iter().copied().filter(|&(j, _)| j < m).collect();
    let mut total = 0.0;
    for &(j, pj) in &support {
        let worst = support
            .iter()
            .filter(|&&(k, _)| k != j)
            .map(|&(k, pk)| pairwise_error(geo.distance(k, j, awake), pj, pk))
            .fold(0.0, f64::max);
        total += pj * worst;
    }
    Ok(total)
}

pub fn bound_tables(model: &NetworkModel) -> Result<BoundTables> {
    if model.distance().kind != DistanceKind::Hamming {
        return Err(Error::Unsupported("the bound is derived for Hamming cost".into()));
    }
    let geo = HypothesisGeometry::new(model)?;
    let m = geo.states;
    let n = geo.sensors;
    let mut t0 = Vec::with_capacity(m * n);
    let mut t = Vec::with_capacity(m * n);
    let all = vec![true; n];
    for i in 0..m {
        let base = expected_pairwise_error(model, &geo, i, &all)?;
        for l in 0..n {
            let mut mask = all.clone();
            mask[l] = false;
            t0.push(base);
            t.push(expected_pairwise_error(model, &geo, i, &mask)?);
        }
    }
    Ok(BoundTables { states: m, sensors: n, t0, t })
}

/// Row-stochastic `m × n` weights splitting the bound across sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix {
    states: usize,
    sensors: usize,
    weights: Vec<f64>,
}

impl LambdaMatrix {
    pub fn uniform(states: usize, sensors: usize) -> Self {
        Self { states, sensors, weights: vec![1.0 / sensors as f64; states * sensors] }
    }

    pub fn new(states: usize, sensors: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != states * sensors {
            return Err(invalid("weight matrix has the wrong shape"));
        }
        for row in weights.chunks(sensors) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(invalid("every row of the weight matrix must lie on the simplex"));
            }
        }
        Ok(Self { states, sensors, weights })
    }

    /// Independent flat-Dirichlet rows.
    pub fn random<R: Rng + ?Sized>(states: usize, sensors: usize, rng: &mut R) -> Self {
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        let mut weights = Vec::with_capacity(states * sensors);
        for _ in 0..states {
            let row: Vec<f64> = (0..sensors).map(|_| gamma.sample(rng)).collect();
            let sum: f64 = row.iter().sum();
            weights.extend(row.iter().map(|w| w / sum));
        }
        Self { states, sensors, weights }
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.weights[i * self.sensors + l]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(1 - γ) Λ + γ V` for another row-stochastic `V`.
    fn blend(&self, other: &LambdaMatrix, gamma: f64) -> Self {
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect();
        Self { states: self.states, sensors: self.sensors, weights }
    }
}

/// Per-sensor bound solutions for one `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LbSolution {
    pub sensors: Vec<SubproblemSolution>,
    /// `J(e_b) = Σ_ℓ J^ℓ(e_b)` for every in-network `b`.
    pub total: Vec<f64>,
}

/// Shared inputs of repeated bound solves.
pub struct LbContext<'a> {
    model: &'a NetworkModel,
    tables: BoundTables,
    powers: KernelPowers,
    u_max: usize,
    tol: f64,
}

impl<'a> LbContext<'a> {
    pub fn new(model: &'a NetworkModel, u_max: usize, tol: f64) -> Result<Self> {
        let tables = bound_tables(model)?;
        let powers = KernelPowers::new(model.matrix()?, u_max + 1);
        Ok(Self { model, tables, powers, u_max, tol })
    }

    pub fn tables(&self) -> &BoundTables {
        &self.tables
    }

    fn subproblem(&self, lambda: &LambdaMatrix, l: usize) -> Result<SleepSubproblem<'_>> {
        let m = self.tables.states;
        Ok(SleepSubproblem {
            matrix: self.model.matrix()?,
            powers: &self.powers,
            asleep: (0..m).map(|i| lambda.get(i, l) * self.tables.t(i, l)).collect(),
            wake: (0..m).map(|i| lambda.get(i, l) * self.tables.t0(i, l)).collect(),
            price: self.model.energy_price(),
            u_max: self.u_max,
            forever: true,
        })
    }

    pub fn solve(&self, lambda: &LambdaMatrix, warm: Option<&LbSolution>) -> Result<LbSolution> {
        let n = self.tables.sensors;
        if lambda.states != self.tables.states || lambda.sensors != n {
            return Err(invalid("weight matrix does not match the network"));
        }
        let sensors = (0..n)
            .map(|l| {
                let start = warm.map(|w| w.sensors[l].sleep.as_slice());
                self.subproblem(lambda, l)?.solve(self.tol, DEFAULT_MAX_ITER, start)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = vec![0.0; self.tables.states];
        for s in &sensors {
            total.iter_mut().zip(&s.values).for_each(|(t, v)| *t += v);
        }
        Ok(LbSolution { sensors, total })
    }

    /// Supergradient of `Σ_ℓ J^ℓ(e_start)` in `Λ`, and the energy part of
    /// the bound.
    fn supergradient(&self, lambda: &LambdaMatrix, sol: &LbSolution, start: usize) -> Result<(Vec<f64>, f64)> {
        let m = self.tables.states;
        let n = self.tables.sensors;
        let mut grad = vec![0.0; m * n];
        let mut energy = 0.0;
        for l in 0..n {
            let occ = self.subproblem(lambda, l)?.occupancy(&sol.sensors[l].sleep, start)?;
            energy += occ.energy;
            for i in 0..m {
                grad[i * n + l] = occ.asleep[i] * self.tables.t(i, l) + occ.wake[i] * self.tables.t0(i, l);
            }
        }
        Ok((grad, energy))
    }
}

/// Solves the bound for a fixed `Λ`.
pub fn lb_solve(model: &NetworkModel, lambda: &LambdaMatrix, u_max: usize, tol: f64) -> Result<LbSolution> {
    LbContext::new(model, u_max, tol)?.solve(lambda, None)
}

/// Settings of the `Λ` search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSearch {
    pub restarts: usize,
    pub steps: usize,
    /// Stop a restart once an accepted step gains less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self { restarts: 20, steps: 100, tol: 1e-10, seed: 0 }
    }
}

/// Best bound found at one energy price.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPoint {
    pub price: f64,
    /// Bound on the total expected cost from the start state.
    pub value: f64,
    pub tracking: f64,
    pub energy: f64,
    pub lambda: LambdaMatrix,
    /// Best value after each accepted ascent step, across restarts.
    pub trajectory: Vec<f64>,
}

struct Ascent {
    value: f64,
    energy: f64,
    lambda: LambdaMatrix,
    trajectory: Vec<f64>,
}

/// Conditional-gradient ascent on the row simplices from `lambda`. Steps
/// that do not improve are halved, so accepted values never decrease.
fn ascend(ctx: &LbContext<'_>, mut lambda: LambdaMatrix, start: usize, search: &LambdaSearch) -> Result<Ascent> {
    let (m, n) = (ctx.tables.states, ctx.tables.sensors);
    let mut sol = ctx.solve(&lambda, None)?;
    let mut value = sol.total[start];
    let mut trajectory = vec![value];
    let (mut grad, mut energy) = ctx.supergradient(&lambda, &sol, start)?;
    for _ in 0..search.steps {
        let mut vertex = vec![0.0; m * n];
        for i in 0..m {
            let row = &grad[i * n..(i + 1) * n];
            let best = (0..n).fold(0, |b, l| if row[l] > row[b] { l } else { b });
            vertex[i * n + best] = 1.0;
        }
        let vertex = LambdaMatrix { states: m, sensors: n, weights: vertex };
        let mut gamma = 1.0;
        let mut accepted = None;
        while gamma > 1e-6 {
            let cand = lambda.blend(&vertex, gamma);
            let cand_sol = ctx.solve(&cand, Some(&sol))?;
            if cand_sol.total[start] > value {
                accepted = Some((cand, cand_sol));
                break;
            }
            gamma /= 2.0;
        }
        let Some((cand, cand_sol)) = accepted else { break };
        let gain = cand_sol.total[start] - value;
        lambda = cand;
        sol = cand_sol;
        value = sol.total[start];
        trajectory.push(value);
        (grad, energy) = ctx.supergradient(&lambda, &sol, start)?;
        if gain < search.tol {
            break;
        }
    }
    Ok(Ascent { value, energy, lambda, trajectory })
}

/// Best bound over the `Λ` search at each energy price, from the model's
/// start state.
pub fn lb_envelope(
    model: &NetworkModel,
    prices: &[f64],
    u_max: usize,
    search: &LambdaSearch,
) -> Result<Vec<BoundPoint>> {
    let Position::Cell(start) = model.start() else {
        return Err(Error::Unsupported("the bound needs a finite state space".into()));
    };
    prices
        .iter()
        .enumerate()
        .map(|(ci, &price)| {
            let priced = model.with_energy_price(price)?;
            let ctx = LbContext::new(&priced, u_max, crate::policy::DEFAULT_TOL)?;
            let (m, n) = (ctx.tables.states, ctx.tables.sensors);
            let runs = (0..search.restarts.max(1))
                .into_par_iter()
                .map(|r| {
                    let init = if r == 0 {
                        LambdaMatrix::uniform(m, n)
                    } else {
                        let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
                        rng.set_stream(((ci as u64) << 32) | r as u64);
                        LambdaMatrix::random(m, n, &mut rng)
                    };
                    ascend(&ctx, init, start, search)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut trajectory = Vec::new();
            let mut best: Option<Ascent> = None;
            for run in runs {
                for &v in &run.trajectory {
                    let so_far = trajectory.last().copied().unwrap_or(f64::NEG_INFINITY);
                    trajectory.push(so_far.max(v));
                }
                if best.as_ref().is_none_or(|b| run.value > b.value) {
                    best = Some(run);
                }
            }
            let best = best.expect("at least one restart");
            Ok(BoundPoint {
                price,
                value: best.value,
                tracking: best.value - best.energy,
                energy: best.energy,
                lambda: best.lambda,
                trajectory,
            })
        })
        .collect()
}
