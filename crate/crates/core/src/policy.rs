//! Per-sensor sleeping policies built from a `T^Δ` table.
//!
//! Q_MDP assumes the object becomes perfectly observable after every control
//! and solves a Bellman equation over point-mass beliefs by policy
//! iteration. FCR assumes no future observations, which gives a closed-form
//! value and a first-crossing wake rule. The overall policy runs the
//! per-sensor policies side by side.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::filter::{Belief, ParticleBelief};
use crate::model::{gaussian_step, MotionKernel, NetworkModel, SleepState, TransitionMatrix, SLEEP_FOREVER};
use crate::tdelta::TDeltaTable;

/// Default policy-iteration tolerance on the Bellman residual.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default policy-iteration cap.
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Relative slack under which two candidate values count as tied.
const TIE_EPS: f64 = 1e-12;

fn tied(v: f64, best: f64) -> bool {
    v <= best + TIE_EPS * best.abs()
}

/// Dense powers `Q^0 ..= Q^K` of the in-network block of a kernel.
#[derive(Debug, Clone)]
pub struct KernelPowers {
    m: usize,
    powers: Vec<f64>,
}

impl KernelPowers {
    pub fn new(matrix: &TransitionMatrix, max_power: usize) -> Self {
        let m = matrix.in_network();
        let mut powers = vec![0.0; (max_power + 1) * m * m];
        for b in 0..m {
            powers[b * m + b] = 1.0;
        }
        for k in 1..=max_power {
            let (done, rest) = powers.split_at_mut(k * m * m);
            let prev = &done[(k - 1) * m * m..];
            for b in 0..m {
                matrix.predict_in_network(&prev[b * m..(b + 1) * m], &mut rest[b * m..(b + 1) * m]);
            }
        }
        Self { m, powers }
    }

    pub fn max_power(&self) -> usize {
        self.powers.len() / (self.m * self.m) - 1
    }

    /// Row `b` of `Q^k`.
    pub fn row(&self, k: usize, b: usize) -> &[f64] {
        let start = (k * self.m + b) * self.m;
        &self.powers[start..start + self.m]
    }
}

/// A per-sensor sleep problem on a finite network:
///
/// `J(b) = min_u Σ_{j<u} (Q^j s)(b) + (Q^u w)(b) + (Q^{u+1} (c + J))(b)`
///
/// where `s` is the cost of each asleep step and `w` the cost charged at the
/// wake step. Q_MDP uses `s = T^Δ(·, ℓ)` and `w = 0`; the lower bound uses
/// weighted bound tables for both.
///
/// With `forever` set, the sleep time `u_max + 1` stands for never waking
/// again, at cost `Σ_{j≥0} (Q^j s)(b)`.
pub struct SleepSubproblem<'a> {
    pub matrix: &'a TransitionMatrix,
    pub powers: &'a KernelPowers,
    pub asleep: Vec<f64>,
    pub wake: Vec<f64>,
    pub price: f64,
    pub u_max: usize,
    pub forever: bool,
}

/// Converged solution of a [`SleepSubproblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub values: Vec<f64>,
    pub sleep: Vec<u32>,
    pub iterations: usize,
    pub residual: f64,
    /// Values after each policy evaluation.
    pub history: Vec<Vec<f64>>,
    /// Minimand at the solution, `minimand[b * width + u]`.
    pub minimand: Vec<f64>,
    pub u_max: usize,
    /// Candidate sleep times per state: `u_max + 1`, plus one when never
    /// waking is allowed.
    pub width: usize,
}

impl SubproblemSolution {
    pub fn minimand_row(&self, b: usize) -> &[f64] {
        let w = self.width;
        &self.minimand[b * w..(b + 1) * w]
    }
}

/// Expected visits under a fixed sleep policy, used for gradients of the
/// value in the per-step costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    /// Expected number of asleep steps charged at each state.
    pub asleep: Vec<f64>,
    /// Expected number of wake charges at each state.
    pub wake: Vec<f64>,
    /// Expected energy cost.
    pub energy: f64,
}

impl SleepSubproblem<'_> {
    fn m(&self) -> usize {
        self.matrix.in_network()
    }

    fn width(&self) -> usize {
        self.u_max + 1 + usize::from(self.forever)
    }

    /// `(I - Q)^{-1}`, the expected visits to each state before exit.
    fn green(&self) -> Result<DMatrix<f64>> {
        let m = self.m();
        let mut a = DMatrix::<f64>::identity(m, m);
        for b in 0..m {
            for (j, v) in self.powers.row(1, b).iter().enumerate() {
                a[(b, j)] -= v;
            }
        }
        a.try_inverse().ok_or_else(|| Error::Model("the object never leaves the network".into()))
    }

    /// J-independent part of the minimand, `b`-major.
    fn fixed_part(&self) -> Result<Vec<f64>> {
        let m = self.m();
        let w = self.u_max + 1;
        let width = self.width();
        let mut out = vec![0.0; m * width];
        if self.forever {
            let g = self.green()?;
            for b in 0..m {
                out[b * width + w] = (0..m).map(|j| g[(b, j)] * self.asleep[j]).sum();
            }
        }
        let mut acc = vec![0.0; m];
        let mut qs = self.asleep.clone();
        let mut qw = self.wake.clone();
        let mut qe = vec![0.0; m];
        self.matrix.apply_in_network(&vec![1.0; m], &mut qe);
        let mut tmp = vec![0.0; m];
        for u in 0..w {
            for b in 0..m {
                out[b * width + u] = acc[b] + qw[b] + self.price * qe[b];
            }
            acc.iter_mut().zip(&qs).for_each(|(a, q)| *a += q);
            for v in [&mut qs, &mut qw, &mut qe] {
                self.matrix.apply_in_network(v, &mut tmp);
                v.copy_from_slice(&tmp);
            }
        }
        Ok(out)
    }

    fn evaluate(&self, fixed: &[f64], sleep: &[u32]) -> Result<Vec<f64>> {
        let m = self.m();
        let w = self.u_max + 1;
        let width = self.width();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for b in 0..m {
            let u = sleep[b] as usize;
            rhs[b] = fixed[b * width + u];
            if u == w {
                continue;
            }
            for (j, v) in self.powers.row(u + 1, b).iter().enumerate() {
                a[(b, j)] -= v;
            }
        }
        let j = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Model("policy evaluation system is singular".into()))?;
        Ok(j.iter().copied().collect())
    }

    /// Full minimand for the given values, `b`-major.
    fn minimand(&self, fixed: &[f64], values: &[f64]) -> Vec<f64> {
        let m = self.m();
        let w = self.u_max + 1;
        let width = self.width();
        let mut out = fixed.to_vec();
        let mut g = vec![0.0; m];
        let mut tmp = values.to_vec();
        for u in 0..w {
            self.matrix.apply_in_network(&tmp, &mut g);
            for b in 0..m {
                out[b * width + u] += g[b];
            }
            std::mem::swap(&mut tmp, &mut g);
        }
        out
    }

    /// Policy iteration from `warm` (or from always waking).
    pub fn solve(&self, tol: f64, max_iter: usize, warm: Option<&[u32]>) -> Result<SubproblemSolution> {
        let m = self.m();
        let w = self.u_max + 1;
        if self.asleep.len() != m || self.wake.len() != m {
            return Err(invalid("per-state cost vectors must cover every in-network state"));
        }
        if self.powers.max_power() < w {
            return Err(invalid("kernel powers do not reach the sleep cap"));
        }
        let fixed = self.fixed_part()?;
        let width = self.width();
        let top = (width - 1) as u32;
        let mut sleep: Vec<u32> = match warm {
            Some(u) if u.len() == m => u.iter().map(|&u| u.min(top)).collect(),
            _ => vec![0; m],
        };
        let mut history = Vec::new();
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let values = self.evaluate(&fixed, &sleep)?;
            let minimand = self.minimand(&fixed, &values);
            residual = 0.0;
            let mut changed = false;
            let mut smallest = vec![0u32; m];
            for b in 0..m {
                let row = &minimand[b * width..(b + 1) * width];
                let best = row.iter().cloned().fold(f64::INFINITY, f64::min);
                residual = f64::max(residual, (values[b] - best).abs());
                smallest[b] = row.iter().position(|&v| tied(v, best)).unwrap_or(0) as u32;
                if !tied(row[sleep[b] as usize], best) {
                    sleep[b] = smallest[b];
                    changed = true;
                }
            }
            history.push(values.clone());
            if residual < tol || !changed {
                return Ok(SubproblemSolution {
                    values,
                    sleep: smallest,
                    iterations: it,
                    residual,
                    history,
                    minimand,
                    u_max: self.u_max,
                    width,
                });
            }
        }
        Err(Error::NonConvergence { what: "policy iteration", iterations: max_iter, residual })
    }

    /// Expected asleep and wake charges per state, and expected energy, when
    /// following `sleep` from state `start`.
    pub fn occupancy(&self, sleep: &[u32], start: usize) -> Result<Occupancy> {
        let m = self.m();
        let w = self.u_max + 1;
        let mut a = DMatrix::<f64>::identity(m, m);
        for b in 0..m {
            if sleep[b] as usize == w {
                continue;
            }
            for (j, v) in self.powers.row(sleep[b] as usize + 1, b).iter().enumerate() {
                a[(j, b)] -= v;
            }
        }
        let mut e = DVector::<f64>::zeros(m);
        e[start] = 1.0;
        // Row `start` of (I - M)^{-1}: expected visits to each decision state.
        let visits = a
            .lu()
            .solve(&e)
            .ok_or_else(|| Error::Model("policy evaluation system is singular".into()))?;
        let green = if sleep.iter().any(|&u| u as usize == w) { Some(self.green()?) } else { None };
        let mut asleep = vec![0.0; m];
        let mut wake = vec![0.0; m];
        let mut energy = 0.0;
        for b in 0..m {
            let n = visits[b];
            if n == 0.0 {
                continue;
            }
            let u = sleep[b] as usize;
            if let Some(g) = green.as_ref().filter(|_| u == w) {
                asleep.iter_mut().enumerate().for_each(|(j, o)| *o += n * g[(b, j)]);
                continue;
            }
            for j in 0..u {
                asleep.iter_mut().zip(self.powers.row(j, b)).for_each(|(o, q)| *o += n * q);
            }
            wake.iter_mut().zip(self.powers.row(u, b)).for_each(|(o, q)| *o += n * q);
            energy += n * self.price * self.powers.row(u + 1, b).iter().sum::<f64>();
        }
        Ok(Occupancy { asleep, wake, energy })
    }
}

/// Q_MDP solution for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSensorValue {
    pub sensor: usize,
    pub solution: SubproblemSolution,
}

impl PerSensorValue {
    pub fn values(&self) -> &[f64] {
        &self.solution.values
    }

    pub fn sleep(&self) -> &[u32] {
        &self.solution.sleep
    }

    pub fn u_max(&self) -> usize {
        self.solution.u_max
    }
}

/// Solves the Q_MDP equation for sensor `sensor` over all point masses.
pub fn qmdp_solve(
    model: &NetworkModel,
    table: &TDeltaTable,
    sensor: usize,
    u_max: usize,
    tol: f64,
) -> Result<PerSensorValue> {
    let matrix = model.matrix()?;
    let powers = KernelPowers::new(matrix, u_max + 1);
    qmdp_solve_with(model, &powers, table, sensor, u_max, tol, None)
}

fn qmdp_solve_with(
    model: &NetworkModel,
    powers: &KernelPowers,
    table: &TDeltaTable,
    sensor: usize,
    u_max: usize,
    tol: f64,
    warm: Option<&[u32]>,
) -> Result<PerSensorValue> {
    let matrix = model.matrix()?;
    if table.rows() != matrix.in_network() || sensor >= table.sensors() {
        return Err(invalid("table does not match the network"));
    }
    let problem = SleepSubproblem {
        matrix,
        powers,
        asleep: table.column(sensor),
        wake: vec![0.0; matrix.in_network()],
        price: model.energy_price(),
        u_max,
        forever: false,
    };
    let solution = problem.solve(tol, DEFAULT_MAX_ITER, warm)?;
    Ok(PerSensorValue { sensor, solution })
}

/// Q_MDP solutions for every sensor, sharing one set of kernel powers.
#[derive(Debug, Clone)]
pub struct QmdpSolution {
    pub sensors: Vec<PerSensorValue>,
    powers: Arc<KernelPowers>,
}

impl QmdpSolution {
    pub fn solve(model: &NetworkModel, table: &TDeltaTable, u_max: usize, tol: f64) -> Result<Self> {
        let powers = Arc::new(KernelPowers::new(model.matrix()?, u_max + 1));
        Self::solve_from(model, table, u_max, tol, powers, None)
    }

    /// Re-solves after a table change, starting from this solution's
    /// policies.
    pub fn resolve(&self, model: &NetworkModel, table: &TDeltaTable, tol: f64) -> Result<Self> {
        let u_max = self.sensors.first().map_or(0, |s| s.u_max());
        Self::solve_from(model, table, u_max, tol, self.powers.clone(), Some(self))
    }

    fn solve_from(
        model: &NetworkModel,
        table: &TDeltaTable,
        u_max: usize,
        tol: f64,
        powers: Arc<KernelPowers>,
        warm: Option<&QmdpSolution>,
    ) -> Result<Self> {
        let sensors = (0..model.sensor_count())
            .into_par_iter()
            .map(|l| {
                let start = warm.map(|w| w.sensors[l].sleep());
                qmdp_solve_with(model, &powers, table, l, u_max, tol, start)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sensors, powers })
    }
}

/// Q_MDP sleep time at an arbitrary finite belief, from the stored
/// point-mass minimand (which is linear in the belief).
pub fn qmdp_sleep_time(value: &PerSensorValue, p_in: &[f64]) -> u32 {
    let w = value.u_max() + 1;
    let mut acc = vec![0.0; w];
    let mut mass = 0.0;
    for (b, &p) in p_in.iter().enumerate() {
        if p > 0.0 {
            mass += p;
            acc.iter_mut().zip(value.solution.minimand_row(b)).for_each(|(a, v)| *a += p * v);
        }
    }
    if mass <= 0.0 {
        return value.u_max() as u32;
    }
    let best = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    acc.iter().position(|&v| tied(v, best)).unwrap_or(0) as u32
}

/// Which side of the FCR comparison must dominate for a sensor to wake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FcrRule {
    /// Wake once expected tracking cost reaches expected energy cost.
    #[default]
    TrackingExceedsEnergy,
    /// The inequality as printed in the closed-form rule, kept for audits.
    EnergyExceedsTracking,
}

impl FcrRule {
    fn wakes(self, tracking: f64, energy: f64) -> bool {
        match self {
            FcrRule::TrackingExceedsEnergy => tracking >= energy,
            FcrRule::EnergyExceedsTracking => energy >= tracking,
        }
    }
}

/// Smallest `u` with `Σ_b t(b) (pQ^u)(b) ≥ c Σ_b (pQ^{u+1})(b)` while the
/// object may still be in the network; `u_max` if none qualifies.
pub fn fcr_sleep_time(matrix: &TransitionMatrix, column: &[f64], p_in: &[f64], price: f64, u_max: usize, rule: FcrRule) -> u32 {
    fcr_sleep_times(matrix, &[column], p_in, price, u_max, rule)[0]
}

/// [`fcr_sleep_time`] for several sensors over one shared belief
/// propagation.
pub fn fcr_sleep_times(
    matrix: &TransitionMatrix,
    columns: &[&[f64]],
    p_in: &[f64],
    price: f64,
    u_max: usize,
    rule: FcrRule,
) -> Vec<u32> {
    let mut out = vec![u_max as u32; columns.len()];
    let mut pending: Vec<usize> = (0..columns.len()).collect();
    let mut cur = p_in.to_vec();
    let mut next = vec![0.0; cur.len()];
    for u in 0..=u_max {
        let mass: f64 = cur.iter().sum();
        if mass <= 0.0 || pending.is_empty() {
            break;
        }
        matrix.predict_in_network(&cur, &mut next);
        let energy = price * next.iter().sum::<f64>();
        pending.retain(|&i| {
            let tracking: f64 = cur.iter().zip(columns[i]).map(|(p, t)| p * t).sum();
            if rule.wakes(tracking, energy) {
                out[i] = u as u32;
                false
            } else {
                true
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

/// FCR sleep times on a particle belief, moving a copy of the cloud by
/// Monte-Carlo steps.
#[allow(clippy::too_many_arguments)]
pub fn fcr_sleep_times_particles<R: Rng + ?Sized>(
    model: &NetworkModel,
    table: &TDeltaTable,
    sensors: &[usize],
    p: &ParticleBelief,
    u_max: usize,
    rule: FcrRule,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let MotionKernel::Gaussian { variance } = *model.kernel() else {
        return Err(invalid("particle FCR needs a continuous network"));
    };
    let (lo, hi) = model.space().bounds();
    let price = model.energy_price();
    let mut out = vec![u_max as u32; sensors.len()];
    let mut pending: Vec<usize> = (0..sensors.len()).collect();
    let mut cloud: Vec<(f64, f64)> = p
        .points()
        .iter()
        .zip(p.weights())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| (x, w))
        .collect();
    for u in 0..=u_max {
        if cloud.is_empty() || pending.is_empty() {
            break;
        }
        let tracking: Vec<f64> = pending
            .iter()
            .map(|&i| cloud.iter().map(|&(x, w)| w * table.eval_at(x, sensors[i])).sum())
            .collect();
        cloud = cloud
            .into_iter()
            .filter_map(|(x, w)| gaussian_step(x, variance, lo, hi, rng).map(|y| (y, w)))
            .collect();
        let energy = price * cloud.iter().map(|&(_, w)| w).sum::<f64>();
        let mut k = 0;
        pending.retain(|&i| {
            let wake = rule.wakes(tracking[k], energy);
            k += 1;
            if wake {
                out[i] = u as u32;
            }
            !wake
        });
    }
    Ok(out)
}

/// Closed-form FCR value `Σ_j min{t·pQ^j, c·|pQ^{j+1}|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcrValue {
    pub value: f64,
    pub terms: usize,
    /// The horizon cap cut the series while mass remained in the network.
    pub truncated: bool,
    /// Upper bound on the omitted tail.
    pub residual_bound: f64,
}

pub fn fcr_value(matrix: &TransitionMatrix, column: &[f64], p_in: &[f64], price: f64, horizon: usize) -> Result<FcrValue> {
    let mut cur = p_in.to_vec();
    let mut next = vec![0.0; cur.len()];
    let mut value = 0.0;
    let mut terms = 0;
    while terms < horizon {
        let mass: f64 = cur.iter().sum();
        if mass < 1e-12 {
            break;
        }
        matrix.predict_in_network(&cur, &mut next);
        let tracking: f64 = cur.iter().zip(column).map(|(p, t)| p * t).sum();
        value += tracking.min(price * next.iter().sum::<f64>());
        std::mem::swap(&mut cur, &mut next);
        terms += 1;
    }
    let mass: f64 = cur.iter().sum();
    let mut truncated = false;
    let mut residual_bound = 0.0;
    if mass > 1e-6 {
        // Each remaining term is at most c times the mass one step on.
        let life = matrix.absorption_times()?;
        residual_bound = price * cur.iter().zip(&life).map(|(p, t)| p * t).sum::<f64>();
        truncated = true;
        warn!("FCR series truncated after {terms} terms; tail at most {residual_bound:e}");
    }
    Ok(FcrValue { value, terms, truncated, residual_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    AllAwake,
    AllAsleep,
    Qmdp,
    Fcr,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::AllAwake => "all-awake",
            PolicyKind::AllAsleep => "all-asleep",
            PolicyKind::Qmdp => "qmdp",
            PolicyKind::Fcr => "fcr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all-awake" | "awake" => Ok(Self::AllAwake),
            "all-asleep" | "asleep" => Ok(Self::AllAsleep),
            "qmdp" => Ok(Self::Qmdp),
            "fcr" => Ok(Self::Fcr),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }

    /// Whether the policy reads a `T^Δ` table.
    pub fn uses_table(self) -> bool {
        matches!(self, PolicyKind::Qmdp | PolicyKind::Fcr)
    }
}

/// A complete sleeping policy ready to issue controls.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: PolicyKind,
    table: Option<TDeltaTable>,
    qmdp: Option<QmdpSolution>,
    u_max: usize,
    rule: FcrRule,
}

impl Controller {
    pub fn all_awake() -> Self {
        Self { kind: PolicyKind::AllAwake, table: None, qmdp: None, u_max: 0, rule: FcrRule::default() }
    }

    pub fn all_asleep() -> Self {
        Self { kind: PolicyKind::AllAsleep, table: None, qmdp: None, u_max: 0, rule: FcrRule::default() }
    }

    pub fn fcr(table: TDeltaTable, u_max: usize) -> Self {
        Self { kind: PolicyKind::Fcr, table: Some(table), qmdp: None, u_max, rule: FcrRule::default() }
    }

    pub fn qmdp(model: &NetworkModel, table: TDeltaTable, u_max: usize) -> Result<Self> {
        let solution = QmdpSolution::solve(model, &table, u_max, DEFAULT_TOL)?;
        Ok(Self { kind: PolicyKind::Qmdp, table: Some(table), qmdp: Some(solution), u_max, rule: FcrRule::default() })
    }

    pub fn build(kind: PolicyKind, model: &NetworkModel, table: Option<TDeltaTable>, u_max: usize) -> Result<Self> {
        let need = || Error::Config(format!("policy {} needs a T^Δ table", kind.as_str()));
        match kind {
            PolicyKind::AllAwake => Ok(Self::all_awake()),
            PolicyKind::AllAsleep => Ok(Self::all_asleep()),
            PolicyKind::Fcr => Ok(Self::fcr(table.ok_or_else(need)?, u_max)),
            PolicyKind::Qmdp => Self::qmdp(model, table.ok_or_else(need)?, u_max),
        }
    }

    pub fn with_rule(mut self, rule: FcrRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn table(&self) -> Option<&TDeltaTable> {
        self.table.as_ref()
    }

    /// Mutable table access for online learning. Q_MDP values go stale until
    /// [`Controller::resolve`] is called.
    pub fn table_mut(&mut self) -> Option<&mut TDeltaTable> {
        self.table.as_mut()
    }

    /// Re-solves Q_MDP values against the current table; a no-op for other
    /// policies.
    pub fn resolve(&mut self, model: &NetworkModel) -> Result<()> {
        if let (Some(q), Some(table)) = (&self.qmdp, &self.table) {
            self.qmdp = Some(q.resolve(model, table, DEFAULT_TOL)?);
        }
        Ok(())
    }

    pub fn qmdp_solution(&self) -> Option<&QmdpSolution> {
        self.qmdp.as_ref()
    }

    pub fn u_max(&self) -> usize {
        self.u_max
    }

    /// Replaces the table; Q_MDP values are re-solved only when `resolve`
    /// is set.
    pub fn update_table(&mut self, model: &NetworkModel, table: TDeltaTable, resolve: bool) -> Result<()> {
        if resolve {
            if let Some(q) = &self.qmdp {
                self.qmdp = Some(q.resolve(model, &table, DEFAULT_TOL)?);
            }
        }
        self.table = Some(table);
        Ok(())
    }

    /// Sleep inputs for every sensor. Only awake sensors get a decision;
    /// sleeping ones receive 0, which the timer update ignores.
    pub fn act<R: Rng + ?Sized>(
        &self,
        model: &NetworkModel,
        p: &Belief,
        timers: &SleepState,
        rng: &mut R,
    ) -> Result<Vec<u32>> {
        let n = model.sensor_count();
        if timers.len() != n {
            return Err(invalid("timer count does not match the sensor count"));
        }
        let awake: Vec<usize> = (0..n).filter(|&l| timers.is_awake(l)).collect();
        let mut u = vec![0u32; n];
        if awake.is_empty() {
            return Ok(u);
        }
        match self.kind {
            PolicyKind::AllAwake => {}
            PolicyKind::AllAsleep => awake.iter().for_each(|&l| u[l] = SLEEP_FOREVER),
            PolicyKind::Qmdp => {
                let q = self.qmdp.as_ref().ok_or_else(|| invalid("Q_MDP policy was not solved"))?;
                let p = p
                    .as_discrete()
                    .ok_or_else(|| Error::Unsupported("Q_MDP needs a finite state space".into()))?;
                for &l in &awake {
                    u[l] = qmdp_sleep_time(&q.sensors[l], p.in_network());
                }
            }
            PolicyKind::Fcr => {
                let table = self.table.as_ref().ok_or_else(|| invalid("FCR policy has no table"))?;
                let price = model.energy_price();
                let times = match p {
                    Belief::Discrete(p) => {
                        let columns: Vec<Vec<f64>> = awake.iter().map(|&l| table.column(l)).collect();
                        let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
                        fcr_sleep_times(model.matrix()?, &refs, p.in_network(), price, self.u_max, self.rule)
                    }
                    Belief::Particles(p) => {
                        fcr_sleep_times_particles(model, table, &awake, p, self.u_max, self.rule, rng)?
                    }
                };
                awake.iter().zip(times).for_each(|(&l, t)| u[l] = t);
            }
        }
        Ok(u)
    }
}
