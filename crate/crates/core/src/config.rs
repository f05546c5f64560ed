//! TOML configuration for user-defined networks and run settings.
//!
//! ```toml
//! [network]
//! name = "line"
//! kind = "finite"              # or "continuous"
//! size = 5                     # locations 1..=size unless `coords` is given
//! steps = [[-1, 0.5], [1, 0.5]] # or `rows`: dense kernel incl. terminal
//! cost = "hamming"             # or "squared-euclidean" with optional `cost_bound`
//! start = 3.0                  # defaults to the middle location
//!
//! [[network.sensors]]
//! location = 2.0
//! kind = "gaussian"            # or "perfect"
//! variance = 1.0
//!
//! [run]
//! c_grid = [0.05, 0.1, 0.2]
//! runs = 50
//! seed = 7
//! ```
//!
//! Continuous networks set `lo`, `hi` and `variance` instead of the kernel
//! fields.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{DistanceMeasure, MotionKernel, NetworkModel, Position, Sensor, StateSpace, TransitionMatrix};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Finite,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Hamming,
    SquaredEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKindSpec {
    Perfect,
    Gaussian,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub location: f64,
    pub kind: SensorKindSpec,
    #[serde(default = "unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub kind: SpaceKind,
    pub size: Option<usize>,
    pub coords: Option<Vec<f64>>,
    pub steps: Option<Vec<(i64, f64)>>,
    pub rows: Option<Vec<Vec<f64>>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub variance: Option<f64>,
    pub cost: CostKind,
    pub cost_bound: Option<f64>,
    pub start: Option<f64>,
    pub sensors: Vec<SensorSpec>,
}

/// Run settings; every field can be overridden on the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub policies: Option<Vec<String>>,
    pub tdelta: Option<String>,
    pub c_grid: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub particles: Option<usize>,
    pub lower_bound: Option<bool>,
    pub samples: Option<usize>,
    pub u_max: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

fn missing(field: &str) -> Error {
    Error::Config(format!("network is missing `{field}`"))
}

impl NetworkSpec {
    /// Builds the model at energy price `c`.
    pub fn build(&self, c: f64) -> Result<NetworkModel> {
        let sensors = self
            .sensors
            .iter()
            .map(|s| match s.kind {
                SensorKindSpec::Perfect => Ok(Sensor::perfect(s.location)),
                SensorKindSpec::Gaussian => Sensor::gaussian(s.location, s.variance),
            })
            .collect::<Result<Vec<_>>>()?;
        let (space, kernel, start) = match self.kind {
            SpaceKind::Finite => {
                let coords = match (&self.coords, self.size) {
                    (Some(c), _) => c.clone(),
                    (None, Some(m)) => (1..=m).map(|i| i as f64).collect(),
                    (None, None) => return Err(missing("size")),
                };
                let m = coords.len();
                let kernel = match (&self.steps, &self.rows) {
                    (Some(steps), None) => TransitionMatrix::from_steps(m, steps)?,
                    (None, Some(rows)) => TransitionMatrix::from_dense(rows.clone())?,
                    _ => return Err(Error::Config("give exactly one of `steps` and `rows`".into())),
                };
                let space = StateSpace::finite(coords)?;
                let start = match self.start {
                    Some(x) => Position::Cell(
                        space
                            .index_of(x)
                            .ok_or_else(|| Error::Config(format!("start {x} is not a network location")))?,
                    ),
                    None => Position::Cell((m - 1) / 2),
                };
                (space, MotionKernel::Matrix(kernel), start)
            }
            SpaceKind::Continuous => {
                let lo = self.lo.ok_or_else(|| missing("lo"))?;
                let hi = self.hi.ok_or_else(|| missing("hi"))?;
                let variance = self.variance.ok_or_else(|| missing("variance"))?;
                let start = Position::Point(self.start.unwrap_or((lo + hi) / 2.0));
                (StateSpace::continuous(lo, hi)?, MotionKernel::gaussian(variance)?, start)
            }
        };
        let distance = match self.cost {
            CostKind::Hamming => DistanceMeasure::hamming(),
            CostKind::SquaredEuclidean => {
                let (lo, hi) = space.bounds();
                DistanceMeasure::squared_euclidean(self.cost_bound.unwrap_or((hi - lo) * (hi - lo)))?
            }
        };
        NetworkModel::new(self.name.clone(), space, kernel, sensors, distance, c, start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"
[network]
name = "line"
kind = "finite"
size = 5
steps = [[-1, 0.5], [1, 0.5]]
cost = "hamming"

[[network.sensors]]
location = 2.0
kind = "gaussian"

[run]
c_grid = [0.1, 0.2]
seed = 4
"#;

    #[test]
    fn finite_network_from_toml() {
        let cfg = ConfigFile::parse(LINE).unwrap();
        let model = cfg.network.unwrap().build(0.1).unwrap();
        assert_eq!(model.sensor_count(), 1);
        assert_eq!(model.start(), Position::Cell(2));
        // Symmetric walk on five cells from the middle: 3 * (6 - 3).
        assert!((model.matrix().unwrap().absorption_times().unwrap()[2] - 9.0).abs() < 1e-9);
        assert_eq!(cfg.run.c_grid, Some(vec![0.1, 0.2]));
        assert_eq!(cfg.run.seed, Some(4));
    }

    #[test]
    fn continuous_network_defaults_bound_to_diameter() {
        let text = r#"
[network]
name = "wire"
kind = "continuous"
lo = 0.0
hi = 4.0
variance = 0.5
cost = "squared-euclidean"
sensors = [{ location = 1.0, kind = "gaussian", variance = 2.0 }]
"#;
        let model = ConfigFile::parse(text).unwrap().network.unwrap().build(0.3).unwrap();
        assert_eq!(model.distance().bound, 16.0);
        assert_eq!(model.start(), Position::Point(2.0));
    }

    #[test]
    fn ambiguous_kernel_is_rejected() {
        let text = LINE.replace("cost = \"hamming\"", "rows = [[1.0]]\ncost = \"hamming\"");
        let err = ConfigFile::parse(&text).unwrap().network.unwrap().build(0.1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(ConfigFile::parse("[run]\nbogus = 1\n"), Err(Error::Config(_))));
    }
}
