//! Motion kernels: sparse transition matrices for finite networks and
//! Gaussian increments for continuous ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic transition matrix over `m` in-network states plus the
/// absorbing terminal state, which always has index `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    /// Builds a kernel from dense rows. The last row must be the unit vector
    /// on the terminal state.
    pub fn from_dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size < 2 {
            return Err(Error::Model(
                "a kernel needs at least one in-network state plus the terminal state".into(),
            ));
        }
        let mut sparse = Vec::with_capacity(size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Model(format!(
                    "kernel row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v) || v.is_nan()) {
                return Err(Error::Model(format!("kernel row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Model(format!("kernel row {i} sums to {sum}, not 1")));
            }
            sparse.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect::<Vec<_>>(),
            );
        }
        let terminal = size - 1;
        if sparse[terminal] != [(terminal, 1.0)] {
            return Err(Error::Model("the terminal row must be absorbing".into()));
        }
        Ok(Self { rows: sparse })
    }

    /// Random walk on `m` cells driven by a step distribution. A move that
    /// lands outside `0..m` exits the network. Step probabilities are
    /// renormalized to sum to one.
    pub fn from_steps(m: usize, steps: &[(i64, f64)]) -> Result<Self> {
        if m == 0 {
            return Err(Error::Model("need at least one in-network state".into()));
        }
        let total: f64 = steps.iter().map(|&(_, p)| p).sum();
        if steps.iter().any(|&(_, p)| p < 0.0 || p.is_nan()) || total <= 0.0 {
            return Err(Error::Model("step probabilities must be non-negative with a positive sum".into()));
        }
        let mut rows = vec![vec![0.0; m + 1]; m + 1];
        for (i, row) in rows.iter_mut().enumerate().take(m) {
            for &(delta, p) in steps {
                let dest = i as i64 + delta;
                let j = if dest < 0 || dest >= m as i64 { m } else { dest as usize };
                row[j] += p / total;
            }
            // Absorb the rounding residue so rows sum to one exactly enough.
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        rows[m][m] = 1.0;
        Self::from_dense(rows)
    }

    /// Total number of states including the terminal one.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn in_network(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn terminal(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|(k, _)| *k == j).map_or(0.0, |&(_, v)| v)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, v) in row {
                    dense[j] = v;
                }
                dense
            })
            .collect()
    }

    /// Row vector times matrix: `out = p P`.
    pub fn predict_into(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for &(j, v) in &self.rows[i] {
                out[j] += pi * v;
            }
        }
    }

    pub fn predict(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.predict_into(p, &mut out);
        out
    }

    /// `out = Q v` where `Q` is the in-network block; `v` and `out` have
    /// length `m` and the terminal state carries value zero.
    pub fn apply_in_network(&self, v: &[f64], out: &mut [f64]) {
        let m = self.in_network();
        for (i, o) in out.iter_mut().enumerate().take(m) {
            *o = self.rows[i]
                .iter()
                .filter(|(j, _)| *j < m)
                .map(|&(j, p)| p * v[j])
                .sum();
        }
    }

    /// Row vector times the in-network block, both of length `m`.
    pub fn predict_in_network(&self, p: &[f64], out: &mut [f64]) {
        let m = self.in_network();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &pi) in p.iter().enumerate().take(m) {
            if pi == 0.0 {
                continue;
            }
            for &(j, v) in &self.rows[i] {
                if j < m {
                    out[j] += pi * v;
                }
            }
        }
    }

    /// Expected number of steps spent in the network from each in-network
    /// state, the solution of `(I - Q) t = 1`.
    pub fn absorption_times(&self) -> Result<Vec<f64>> {
        let m = self.in_network();
        let mut a = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for &(j, v) in &self.rows[i] {
                if j < m {
                    a[(i, j)] -= v;
                }
            }
        }
        let t = a
            .lu()
            .solve(&DVector::from_element(m, 1.0))
            .ok_or_else(|| Error::Model("the kernel has states that never leave the network".into()))?;
        if t.iter().any(|v| !v.is_finite() || *v < 1.0 - 1e-9) {
            return Err(Error::Model("the kernel has states that never leave the network".into()));
        }
        Ok(t.iter().copied().collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let row = &self.rows[i];
        let mut u: f64 = rng.random();
        for &(j, v) in row {
            if u < v {
                return j;
            }
            u -= v;
        }
        row.last().map_or(i, |&(j, _)| j)
    }
}

/// How the object moves between time steps.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionKernel {
    Matrix(TransitionMatrix),
    /// Independent Gaussian increments on an interval; leaving the interval
    /// is absorption.
    Gaussian { variance: f64 },
}

impl MotionKernel {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid(format!("motion variance must be positive, got {variance}")));
        }
        Ok(Self::Gaussian { variance })
    }

    pub fn matrix(&self) -> Option<&TransitionMatrix> {
        match self {
            Self::Matrix(m) => Some(m),
            Self::Gaussian { .. } => None,
        }
    }
}

/// Standard normal upper tail `Q(x) = P[Z > x]`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Probability that a Gaussian step from `x` leaves `[lo, hi]`.
pub fn gaussian_exit_probability(x: f64, variance: f64, lo: f64, hi: f64) -> f64 {
    let sd = variance.sqrt();
    normal_tail((hi - x) / sd) + normal_tail((x - lo) / sd)
}

/// One Gaussian step from `x`; `None` means the object left `[lo, hi]`.
pub fn gaussian_step<R: Rng + ?Sized>(x: f64, variance: f64, lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
    let z: f64 = StandardNormal.sample(rng);
    let y = x + variance.sqrt() * z;
    (lo..=hi).contains(&y).then_some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steps_exit_past_the_boundary() {
        let p = TransitionMatrix::from_steps(3, &[(-1, 0.5), (1, 0.5)]).unwrap();
        assert_eq!(p.entry(0, 3), 0.5);
        assert_eq!(p.entry(0, 1), 0.5);
        assert_eq!(p.entry(1, 0), 0.5);
        assert_eq!(p.entry(1, 2), 0.5);
        assert_eq!(p.entry(3, 3), 1.0);
    }

    #[test]
    fn gamblers_ruin_lifetime() {
        let p = TransitionMatrix::from_steps(41, &[(-1, 0.5), (1, 0.5)]).unwrap();
        let t = p.absorption_times().unwrap();
        // i (42 - i) from cell i
        assert!((t[20] - 441.0).abs() < 1e-9);
        assert!((t[0] - 41.0).abs() < 1e-9);
        let stuck = TransitionMatrix::from_dense(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(stuck.absorption_times().is_err());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TransitionMatrix::from_dense(vec![vec![0.5, 0.4], vec![0.0, 1.0]]);
        assert!(err.is_err());
        let err = TransitionMatrix::from_dense(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(err.is_err());
    }

    #[test]
    fn sampling_follows_the_row() {
        let p = TransitionMatrix::from_steps(5, &[(-1, 0.25), (1, 0.75)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let right = (0..n).filter(|_| p.sample(2, &mut rng) == 3).count();
        let frac = right as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }

    #[test]
    fn exit_probability_is_symmetric_at_the_center() {
        let left = gaussian_exit_probability(11.0, 1.0, 1.0, 21.0);
        assert!(left < 1e-20);
        let edge = gaussian_exit_probability(1.0, 1.0, 1.0, 21.0);
        assert!((edge - 0.5).abs() < 1e-12);
        assert!((normal_tail(1.0) - 0.158_655_253_931_457_05).abs() < 1e-10);
    }
}
