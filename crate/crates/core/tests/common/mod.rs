//! Independent reference computations shared by the integration and
//! acceptance tests. Everything here works on plain dense vectors and never
//! calls into the library's solvers.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dense kernel over `m` states plus a terminal column/row. Every
/// state exits with probability at least `min_exit`.
pub fn random_kernel<R: Rng>(rng: &mut R, m: usize, min_exit: f64) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(m + 1);
    for _ in 0..m {
        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
        let exit = min_exit + (1.0 - min_exit) * 0.3 * rng.random::<f64>();
        let s: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|v| v / s * (1.0 - exit)).collect();
        let rest: f64 = row.iter().sum();
        row.push(1.0 - rest);
        rows.push(row);
    }
    let mut last = vec![0.0; m + 1];
    last[m] = 1.0;
    rows.push(last);
    rows
}

/// In-network block `Q` of a dense kernel with terminal last.
pub fn in_network(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len() - 1;
    rows[..m].iter().map(|r| r[..m].to_vec()).collect()
}

/// `p Q`.
pub fn left(p: &[f64], q: &[Vec<f64>]) -> Vec<f64> {
    let m = q.len();
    (0..m).map(|j| (0..m).map(|i| p[i] * q[i][j]).sum()).collect()
}

/// `Q v`.
pub fn right(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian sensor with the library's signal model, written out by hand.
#[derive(Debug, Clone, Copy)]
pub struct GaussSensor {
    pub location: f64,
    pub variance: f64,
}

impl GaussSensor {
    pub fn density(&self, y: f64, b: f64) -> f64 {
        let d = self.location - b;
        let mean = 10.0 / (d * d + 1.0);
        (-(y - mean) * (y - mean) / (2.0 * self.variance)).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }
}

/// Posterior over in-network states after the observation sequence, by
/// summing over every in-network path. `None` marks an asleep sensor.
pub fn enumerate_posterior(
    p0: &[f64],
    kernel: &[Vec<f64>],
    coords: &[f64],
    sensors: &[GaussSensor],
    obs: &[Vec<Option<f64>>],
) -> Vec<f64> {
    let m = coords.len();
    let steps = obs.len();
    let mut post = vec![0.0; m];
    let mut path = vec![0usize; steps];
    let total_paths = m.pow(steps as u32);
    for start in 0..m {
        if p0[start] == 0.0 {
            continue;
        }
        for code in 0..total_paths {
            let mut c = code;
            for s in path.iter_mut() {
                *s = c % m;
                c /= m;
            }
            let mut w = p0[start];
            let mut prev = start;
            for (k, &b) in path.iter().enumerate() {
                w *= kernel[prev][b];
                for (s, y) in sensors.iter().zip(&obs[k]) {
                    if let Some(y) = y {
                        w *= s.density(*y, coords[b]);
                    }
                }
                prev = b;
            }
            post[path[steps - 1]] += w;
        }
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|v| v / z).collect()
}

/// Finite-horizon backward induction of the no-observation sleep equation
/// along the deterministic beliefs `p Q^s`. Returns the value at `s = 0` and
/// the minimand over `u` at `s = 0`.
pub fn fcr_backward(q: &[Vec<f64>], t: &[f64], p: &[f64], c: f64, horizon: usize) -> (f64, Vec<f64>) {
    let mut beliefs = vec![p.to_vec()];
    for s in 0..=horizon {
        let next = left(&beliefs[s], q);
        beliefs.push(next);
    }
    let track: Vec<f64> = beliefs.iter().map(|b| dot(b, t)).collect();
    let mass: Vec<f64> = beliefs.iter().map(|b| b.iter().sum()).collect();
    let mut v = vec![0.0; horizon + 1];
    let mut first = Vec::new();
    for s in (0..horizon).rev() {
        let mut best = f64::INFINITY;
        let mut asleep = 0.0;
        let mut row = Vec::new();
        for u in 0..horizon - s {
            let cand = asleep + c * mass[s + u + 1] + v[s + u + 1];
            row.push(cand);
            best = best.min(cand);
            asleep += track[s + u];
        }
        // Sleeping through the end of the horizon.
        best = best.min(asleep);
        v[s] = best;
        if s == 0 {
            first = row;
        }
    }
    (v[0], first)
}

/// Value iteration for the observable-after-control sleep equation at point
/// masses, to a sup-norm change below `tol`.
pub fn qmdp_value_iteration(q: &[Vec<f64>], t: &[f64], c: f64, u_max: usize, tol: f64) -> Vec<f64> {
    sleep_value_iteration(q, t, &vec![0.0; q.len()], c, u_max, tol).0
}

/// Value iteration for `J(b) = min_u Σ_{j<u} (Q^j s)(b) + (Q^u w)(b) +
/// (Q^{u+1}(c + J))(b)`. Returns the values and the minimand rows
/// `[b][u]` at those values.
pub fn sleep_value_iteration(
    q: &[Vec<f64>],
    s: &[f64],
    w: &[f64],
    c: f64,
    u_max: usize,
    tol: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = q.len();
    // powers[u] = Q^u as rows.
    let identity: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut powers = vec![identity];
    for u in 0..=u_max {
        let next: Vec<Vec<f64>> = (0..m).map(|i| left(&powers[u][i], q)).collect();
        powers.push(next);
    }
    let mut fixed = vec![vec![0.0; u_max + 1]; m];
    for (b, row) in fixed.iter_mut().enumerate() {
        let mut asleep = 0.0;
        for (u, slot) in row.iter_mut().enumerate() {
            *slot = asleep + dot(&powers[u][b], w) + c * powers[u + 1][b].iter().sum::<f64>();
            asleep += dot(&powers[u][b], s);
        }
    }
    let minimand = |j: &[f64]| -> Vec<Vec<f64>> {
        (0..m).map(|b| (0..=u_max).map(|u| fixed[b][u] + dot(&powers[u + 1][b], j)).collect()).collect()
    };
    let mut j = vec![0.0; m];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = minimand(&j).iter().map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        let diff = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = next;
        if diff < tol {
            break;
        }
    }
    let rows = minimand(&j);
    (j, rows)
}

/// Expected total Hamming cost over steps `k ≥ 1` of the MAP estimate under
/// prediction alone, starting from a point mass at `start`:
/// `Σ_k (|q_k| - max_b q_k(b))` with `q_k = e_start Q^k`.
pub fn prediction_only_hamming(q: &[Vec<f64>], start: usize, tol: f64) -> f64 {
    let mut p = vec![0.0; q.len()];
    p[start] = 1.0;
    let mut total = 0.0;
    loop {
        p = left(&p, q);
        let mass: f64 = p.iter().sum();
        if mass < tol {
            return total;
        }
        total += mass - p.iter().cloned().fold(0.0, f64::max);
    }
}
