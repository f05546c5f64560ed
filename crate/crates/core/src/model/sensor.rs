use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

/// Peak received signal strength of a Gaussian sensor.
pub const PEAK_SIGNAL: f64 = 10.0;

/// Locations closer than this count as the same point for binary sensors.
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorKind {
    /// Reports without error whether the object sits exactly at the sensor.
    PerfectBinary,
    /// Reports `N(10 / ((ν - b)² + 1), variance)`.
    Gaussian { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensor {
    pub location: f64,
    pub kind: SensorKind,
}

/// What a sensor reported in one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reading {
    /// The sensor was asleep.
    Erased,
    Value(f64),
}

impl Reading {
    pub fn value(self) -> Option<f64> {
        match self {
            Reading::Erased => None,
            Reading::Value(v) => Some(v),
        }
    }
}

/// Readings of the real sensors plus the exact report of the virtual exit
/// sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub readings: Vec<Reading>,
    pub exited: bool,
}

impl Sensor {
    pub fn perfect(location: f64) -> Self {
        Self { location, kind: SensorKind::PerfectBinary }
    }

    pub fn gaussian(location: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid(format!("sensor noise variance must be positive, got {variance}")));
        }
        Ok(Self { location, kind: SensorKind::Gaussian { variance } })
    }

    /// Mean received signal strength with the object at `b`.
    pub fn mean_signal(&self, b: f64) -> f64 {
        let d = self.location - b;
        PEAK_SIGNAL / (d * d + 1.0)
    }

    fn covers(&self, b: f64) -> bool {
        (self.location - b).abs() < COINCIDENT
    }

    /// Log-likelihood of `reading` given the object at `b`, up to an additive
    /// constant. Impossible readings give `-inf`.
    pub fn log_likelihood(&self, reading: f64, b: f64) -> f64 {
        match self.kind {
            SensorKind::PerfectBinary => {
                let hit = reading > 0.5;
                if hit == self.covers(b) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            SensorKind::Gaussian { variance } => {
                let r = reading - self.mean_signal(b);
                -0.5 * r * r / variance
            }
        }
    }

    /// Draws a reading for an object at `b`; `None` means the object has
    /// left the network, which looks like silence.
    pub fn sample<R: Rng + ?Sized>(&self, b: Option<f64>, rng: &mut R) -> f64 {
        match self.kind {
            SensorKind::PerfectBinary => match b {
                Some(b) if self.covers(b) => 1.0,
                _ => 0.0,
            },
            SensorKind::Gaussian { variance } => {
                let mean = b.map_or(0.0, |b| self.mean_signal(b));
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mean_near_the_sensor() {
        let s = Sensor::gaussian(8.09, 1.0).unwrap();
        // 10 / (0.09^2 + 1)
        assert!((s.mean_signal(8.0) - 9.919_650_828_290_845).abs() < 1e-12);
        assert_eq!(s.mean_signal(8.09), 10.0);
    }

    #[test]
    fn binary_likelihood_is_an_indicator() {
        let s = Sensor::perfect(3.0);
        assert_eq!(s.log_likelihood(1.0, 3.0), 0.0);
        assert_eq!(s.log_likelihood(0.0, 3.0), f64::NEG_INFINITY);
        assert_eq!(s.log_likelihood(0.0, 4.0), 0.0);
        assert_eq!(s.log_likelihood(1.0, 4.0), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_non_positive_noise() {
        assert!(Sensor::gaussian(1.0, 0.0).is_err());
        assert!(Sensor::gaussian(1.0, -1.0).is_err());
    }
}
