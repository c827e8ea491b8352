//! Sensor-localisation benchmarks: unknown sensor positions in the plane are
//! inferred from noisy pairwise distance measurements.
//!
//! Distances are invariant under relabeling-compatible reflections, so with
//! few measured pairs the posterior splits into well-separated mirror modes;
//! adding pairs collapses them. Two instances are provided: a four-sensor
//! network (two unknown sensors, four measured pairs, very tight noise) and a
//! six-sensor network (four unknown sensors, a 14-pair candidate pool for
//! design search).
//!
//! Sensors are indexed `0..n` with the unknown ones first; a pair `(i, j)`
//! requires `i < j` and at least one unknown member. Pair labels in
//! experiment names are 1-based to match the usual written convention.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{Experiment, ForwardModel, NoiseModel, Prior};
use crate::real::Real;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Distance floor below which a pair is treated as degenerate when forming
/// derivatives; `1/D` blows up as two sensors coincide.
const DISTANCE_FLOOR: f64 = 1e-12;

/// Planar network of unknown and fixed sensors measured through pairwise
/// distances.
pub struct SensorNetwork<T: Real> {
    unknown: usize,
    fixed: Vec<[T; 2]>,
    pairs: Vec<(usize, usize)>,
    name: String,
    degenerate_pairs: AtomicU64,
}

impl<T: Real> SensorNetwork<T> {
    /// `unknown` sensors come first in the global index; `pairs` hold global
    /// indices with `i < j` and at least one unknown member.
    pub fn new(
        unknown: usize,
        fixed: Vec<[T; 2]>,
        pairs: Vec<(usize, usize)>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let total = unknown + fixed.len();
        if unknown == 0 || pairs.is_empty() {
            return Err(Error::Domain(
                "a sensor network needs at least one unknown sensor and one pair".into(),
            ));
        }
        for &(i, j) in &pairs {
            if i >= j || j >= total {
                return Err(Error::Domain(format!(
                    "pair ({i}, {j}) is not an ordered pair of sensor indices below {total}"
                )));
            }
            if i >= unknown {
                return Err(Error::Domain(format!(
                    "pair ({i}, {j}) measures two fixed sensors and carries no information"
                )));
            }
        }
        Ok(Self {
            unknown,
            fixed,
            pairs,
            name: name.into(),
            degenerate_pairs: AtomicU64::new(0),
        })
    }

    fn position(&self, theta: &[T], sensor: usize) -> [T; 2] {
        if sensor < self.unknown {
            [theta[2 * sensor], theta[2 * sensor + 1]]
        } else {
            self.fixed[sensor - self.unknown]
        }
    }

    /// Number of jacobian rows that needed the distance floor so far.
    pub fn degenerate_pair_count(&self) -> u64 {
        self.degenerate_pairs.load(Ordering::Relaxed)
    }

    /// Measured pairs in global sensor indices.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

impl<T: Real> ForwardModel<T> for SensorNetwork<T> {
    fn param_dim(&self) -> usize {
        2 * self.unknown
    }

    fn obs_dim(&self) -> usize {
        self.pairs.len()
    }

    fn evaluate(&self, theta: &[T], _xi: &[T]) -> Vec<T> {
        self.pairs
            .iter()
            .map(|&(i, j)| {
                let a = self.position(theta, i);
                let b = self.position(theta, j);
                let dx = a[0] - b[0];
                let dz = a[1] - b[1];
                (dx * dx + dz * dz).sqrt()
            })
            .collect()
    }

    fn jacobian(&self, theta: &[T], _xi: &[T]) -> Option<Mat<T>> {
        let floor = T::of(DISTANCE_FLOOR);
        let mut jac = Mat::zeros(self.pairs.len(), 2 * self.unknown);
        for (row, &(i, j)) in self.pairs.iter().enumerate() {
            let a = self.position(theta, i);
            let b = self.position(theta, j);
            let dx = a[0] - b[0];
            let dz = a[1] - b[1];
            let mut dist = (dx * dx + dz * dz).sqrt();
            if dist < floor {
                dist = floor;
                self.degenerate_pairs.fetch_add(1, Ordering::Relaxed);
            }
            if i < self.unknown {
                jac.set(row, 2 * i, dx / dist);
                jac.set(row, 2 * i + 1, dz / dist);
            }
            if j < self.unknown {
                jac.set(row, 2 * j, -dx / dist);
                jac.set(row, 2 * j + 1, -dz / dist);
            }
        }
        Some(jac)
    }

    fn name(&self) -> &str {
        &self.name
    }

    /// One block per unknown sensor: reflections of a single sensor are the
    /// dominant spurious minima, so positions recombine as whole points.
    fn theta_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.unknown).map(|s| vec![2 * s, 2 * s + 1]).collect()
    }
}

fn pairs_label(pairs: &[(usize, usize)]) -> String {
    let mut label = String::from("pairs=");
    for &(i, j) in pairs {
        label.push_str(&format!("({},{})", i + 1, j + 1));
    }
    label
}

/// Four-sensor network: sensors 1 and 2 unknown on `U(0,1)^4`, sensors 3 and
/// 4 fixed at `(0.5, 0.3)` and `(0.3, 0.5)`, all four unknown-fixed pairs
/// measured with noise standard deviation `5e-4`.
pub fn sensor4_experiment<T: Real>() -> Result<Experiment<T>> {
    let pairs = vec![(0, 2), (0, 3), (1, 2), (1, 3)];
    let label = pairs_label(&pairs);
    let model = SensorNetwork::new(
        2,
        vec![
            [T::of(0.5), T::of(0.3)],
            [T::of(0.3), T::of(0.5)],
        ],
        pairs,
        "sensor4",
    )?;
    let sigma = T::of(5e-4);
    Experiment::new(
        Arc::new(model),
        Prior::uniform(vec![T::zero(); 4], vec![T::one(); 4])?,
        NoiseModel::calibrated(sigma * sigma)?,
        vec![T::zero()],
        1,
        label,
    )
}

/// All 14 measurable pairs of the six-sensor network in lexicographic order
/// (the fixed-fixed pair is excluded).
pub fn sensor6_full_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(14);
    for i in 0..6 {
        for j in (i + 1)..6 {
            if i >= 4 {
                continue;
            }
            pairs.push((i, j));
        }
    }
    pairs
}

/// Six-sensor network restricted to a chosen pair subset; `sigma2` is the
/// calibrated noise variance shared by all measured distances.
pub fn sensor6_with_pairs<T: Real>(
    pairs: &[(usize, usize)],
    sigma2: T,
) -> Result<Experiment<T>> {
    let label = pairs_label(pairs);
    let model = SensorNetwork::new(
        4,
        vec![
            [T::of(0.5), T::of(0.3)],
            [T::of(0.3), T::of(0.7)],
        ],
        pairs.to_vec(),
        "sensor6",
    )?;
    Experiment::new(
        Arc::new(model),
        Prior::gaussian(vec![T::zero(); 8], vec![T::one(); 8])?,
        NoiseModel::calibrated(sigma2)?,
        vec![T::zero()],
        1,
        label,
    )
}

/// Six-sensor network with its default design: the eight unknown-fixed pairs.
/// Sensors 1-4 are unknown with a standard normal prior per coordinate;
/// sensors 5 and 6 sit at `(0.5, 0.3)` and `(0.3, 0.7)`.
pub fn sensor6_experiment<T: Real>(sigma2: T) -> Result<Experiment<T>> {
    let pairs: Vec<(usize, usize)> =
        (0..4).flat_map(|i| [(i, 4), (i, 5)]).collect();
    sensor6_with_pairs(&pairs, sigma2)
}
