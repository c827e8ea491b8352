//! Experiment ingredients: the forward model `g(theta, xi)`, the parameter
//! prior, the observation noise, and the simulator that ties them together.
//! Data are `y_i = g(theta, xi) + eps_i` with `eps_i ~ N(0, sigma_e^2 I)`,
//! replicated `m` times at a fixed design.

use std::sync::Arc;

use rand::Rng;

use crate::error::{fmt_vec, Error, Result};
use crate::linalg::Mat;
use crate::math::normal_quantile;
use crate::real::Real;

/// Deterministic map from parameters and design to a noise-free observation.
pub trait ForwardModel<T: Real>: Send + Sync {
    /// Dimension of `theta`.
    fn param_dim(&self) -> usize;

    /// Dimension of one observation vector.
    fn obs_dim(&self) -> usize;

    /// `g(theta, xi)`; `xi` is the continuous design vector (may be empty).
    fn evaluate(&self, theta: &[T], xi: &[T]) -> Vec<T>;

    /// Analytic `dg/dtheta` (`obs_dim x param_dim`), or `None` to defer to
    /// central differences.
    fn jacobian(&self, theta: &[T], xi: &[T]) -> Option<Mat<T>> {
        let _ = (theta, xi);
        None
    }

    /// Coordinate blocks that move as a unit when search modes are
    /// recombined, e.g. one block per unknown planar position. Defaults to
    /// one block per coordinate.
    fn theta_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.param_dim()).map(|j| vec![j]).collect()
    }

    /// Short identifier used in output rows.
    fn name(&self) -> &str;
}

/// `dg/dtheta`, analytic when the model provides it, otherwise central
/// differences with step `1e-5 * max(1, |theta_j|)` per coordinate.
pub fn model_jacobian<T: Real>(model: &dyn ForwardModel<T>, theta: &[T], xi: &[T]) -> Mat<T> {
    if let Some(j) = model.jacobian(theta, xi) {
        return j;
    }
    let h = T::of(1e-5);
    let mut probe = theta.to_vec();
    let mut jac = Mat::zeros(model.obs_dim(), model.param_dim());
    for c in 0..theta.len() {
        let step = h * T::one().max(theta[c].abs());
        probe[c] = theta[c] + step;
        let fp = model.evaluate(&probe, xi);
        probe[c] = theta[c] - step;
        let fm = model.evaluate(&probe, xi);
        probe[c] = theta[c];
        for r in 0..fp.len() {
            jac.set(r, c, (fp[r] - fm[r]) / (step + step));
        }
    }
    jac
}

/// Independent-coordinate prior over `theta`.
#[derive(Clone, Debug)]
pub enum Prior<T> {
    /// `theta_j ~ U(lo_j, hi_j)`.
    UniformBox { lo: Vec<T>, hi: Vec<T> },
    /// `theta_j ~ N(mean_j, var_j)`.
    GaussianDiag { mean: Vec<T>, var: Vec<T> },
}

impl<T: Real> Prior<T> {
    /// Uniform box prior; every interval must be non-empty and finite.
    pub fn uniform(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Domain(
                "uniform prior needs matching non-empty bound vectors".into(),
            ));
        }
        for j in 0..lo.len() {
            if !lo[j].is_finite() || !hi[j].is_finite() || !(hi[j] > lo[j]) {
                return Err(Error::Domain(format!(
                    "uniform prior interval {j} is empty or non-finite"
                )));
            }
        }
        Ok(Prior::UniformBox { lo, hi })
    }

    /// Diagonal Gaussian prior; every variance must be positive and finite.
    pub fn gaussian(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::Domain(
                "gaussian prior needs matching non-empty mean/variance vectors".into(),
            ));
        }
        for j in 0..mean.len() {
            if !mean[j].is_finite() || !var[j].is_finite() || !(var[j] > T::zero()) {
                return Err(Error::Domain(format!(
                    "gaussian prior coordinate {j} has non-positive or non-finite variance"
                )));
            }
        }
        Ok(Prior::GaussianDiag { mean, var })
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::UniformBox { lo, .. } => lo.len(),
            Prior::GaussianDiag { mean, .. } => mean.len(),
        }
    }

    /// One draw from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match self {
            Prior::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| a + T::unit_uniform(rng) * (b - a))
                .collect(),
            Prior::GaussianDiag { mean, var } => mean
                .iter()
                .zip(var)
                .map(|(&m, &v)| m + v.sqrt() * T::standard_normal(rng))
                .collect(),
        }
    }

    /// Log prior density; `-inf` outside a uniform box.
    pub fn log_density(&self, theta: &[T]) -> T {
        assert_eq!(theta.len(), self.dim());
        match self {
            Prior::UniformBox { lo, hi } => {
                let mut acc = T::zero();
                for j in 0..lo.len() {
                    if theta[j] < lo[j] || theta[j] > hi[j] {
                        return T::neg_infinity();
                    }
                    acc -= (hi[j] - lo[j]).ln();
                }
                acc
            }
            Prior::GaussianDiag { mean, var } => {
                let half = T::of(0.5);
                let mut acc = T::zero();
                for j in 0..mean.len() {
                    let d = theta[j] - mean[j];
                    acc -= half * (d * d / var[j] + var[j].ln() + T::ln_two_pi());
                }
                acc
            }
        }
    }

    /// Whether `theta` lies in the support (closed box for uniform).
    pub fn contains(&self, theta: &[T]) -> bool {
        match self {
            Prior::UniformBox { lo, hi } => theta
                .iter()
                .enumerate()
                .all(|(j, &t)| t >= lo[j] && t <= hi[j]),
            Prior::GaussianDiag { .. } => theta.iter().all(|t| t.is_finite()),
        }
    }

    /// Coordinate-wise quantile transform; `u` is clamped away from `{0, 1}`
    /// so Gaussian tails stay finite.
    pub fn quantile(&self, j: usize, u: T) -> T {
        let eps = T::of(1e-12);
        let u = u.max(eps).min(T::one() - eps);
        match self {
            Prior::UniformBox { lo, hi } => lo[j] + u * (hi[j] - lo[j]),
            Prior::GaussianDiag { mean, var } => mean[j] + var[j].sqrt() * normal_quantile(u),
        }
    }

    /// Box bounds for priors with compact support.
    pub fn support_bounds(&self) -> Option<(&[T], &[T])> {
        match self {
            Prior::UniformBox { lo, hi } => Some((lo, hi)),
            Prior::GaussianDiag { .. } => None,
        }
    }

    /// Diagonal of `d^2 log p / d theta^2` (constant for both families).
    pub fn log_density_hessian_diag(&self) -> Vec<T> {
        match self {
            Prior::UniformBox { lo, .. } => vec![T::zero(); lo.len()],
            Prior::GaussianDiag { var, .. } => var.iter().map(|&v| -v.recip()).collect(),
        }
    }

    /// Per-coordinate variance of the prior distribution itself:
    /// `(hi-lo)^2/12` for a uniform box, the stated variances for a Gaussian.
    pub fn variance_diag(&self) -> Vec<T> {
        match self {
            Prior::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| (b - a) * (b - a) / T::of(12.0))
                .collect(),
            Prior::GaussianDiag { var, .. } => var.clone(),
        }
    }

    /// Characteristic length of the support: the box diagonal, or six times
    /// the largest standard deviation. Used to set dedup radii and step caps.
    pub fn length_scale(&self) -> T {
        match self {
            Prior::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| (b - a) * (b - a))
                .sum::<T>()
                .sqrt(),
            Prior::GaussianDiag { var, .. } => {
                let max_sd = var
                    .iter()
                    .fold(T::zero(), |acc, &v| acc.max(v.sqrt()));
                T::of(6.0) * max_sd
            }
        }
    }
}

/// Observation noise specification.
#[derive(Clone, Debug)]
pub enum NoiseModel<T> {
    /// Known standard deviation: `eps ~ N(0, sigma2 I)`.
    Calibrated { sigma2: T },
    /// Unknown level: `sigma_e ~ U(lo, hi)` (standard deviation), handled by
    /// marginalising over `samples` draws per outer sample.
    Uncalibrated { lo: T, hi: T, samples: usize },
}

impl<T: Real> NoiseModel<T> {
    pub fn calibrated(sigma2: T) -> Result<Self> {
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(Error::Domain("noise variance must be positive".into()));
        }
        Ok(NoiseModel::Calibrated { sigma2 })
    }

    pub fn uncalibrated(lo: T, hi: T, samples: usize) -> Result<Self> {
        if !(lo > T::zero()) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Domain(
                "uncalibrated noise needs 0 < lo <= hi for the sigma range".into(),
            ));
        }
        if samples == 0 {
            return Err(Error::Domain(
                "uncalibrated noise needs at least one marginalisation sample".into(),
            ));
        }
        Ok(NoiseModel::Uncalibrated { lo, hi, samples })
    }

    /// Noise standard deviation when it is known.
    pub fn calibrated_sigma(&self) -> Option<T> {
        match self {
            NoiseModel::Calibrated { sigma2 } => Some(sigma2.sqrt()),
            NoiseModel::Uncalibrated { .. } => None,
        }
    }

    /// Draws a ground-truth standard deviation for data simulation.
    pub fn draw_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            NoiseModel::Calibrated { sigma2 } => sigma2.sqrt(),
            NoiseModel::Uncalibrated { lo, hi, .. } => *lo + T::unit_uniform(rng) * (*hi - *lo),
        }
    }
}

/// `m` replicate observations stacked row-wise (`m x obs_dim`).
#[derive(Clone, Debug)]
pub struct ObservationSet<T> {
    data: Mat<T>,
}

impl<T: Real> ObservationSet<T> {
    pub fn new(data: Mat<T>) -> Self {
        ObservationSet { data }
    }

    pub fn replicates(&self) -> usize {
        self.data.rows()
    }

    pub fn obs_dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.data.row(i)
    }

    /// Replicate average `y_bar`, the sufficient statistic for the mean.
    pub fn mean_row(&self) -> Vec<T> {
        let m = T::of(self.replicates() as f64);
        (0..self.obs_dim())
            .map(|c| {
                (0..self.replicates())
                    .map(|r| self.data.at(r, c))
                    .sum::<T>()
                    / m
            })
            .collect()
    }
}

/// Stacks `m` noisy replicates of `g(theta, xi)` with `N(0, sigma^2 I)` noise.
pub fn simulate_observations<T: Real, R: Rng + ?Sized>(
    model: &dyn ForwardModel<T>,
    theta: &[T],
    xi: &[T],
    sigma: T,
    replicates: usize,
    rng: &mut R,
) -> Result<ObservationSet<T>> {
    if replicates == 0 {
        return Err(Error::Domain("need at least one replicate".into()));
    }
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::Domain(
            "noise standard deviation must be finite and non-negative".into(),
        ));
    }
    let g = model.evaluate(theta, xi);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteModel {
            theta: fmt_vec(theta),
        });
    }
    let mut data = Mat::zeros(replicates, g.len());
    for r in 0..replicates {
        for (c, &gc) in g.iter().enumerate() {
            data.set(r, c, gc + sigma * T::standard_normal(rng));
        }
    }
    Ok(ObservationSet::new(data))
}

/// A fully specified design-evaluation problem: model, prior, noise, and the
/// design under study.
#[derive(Clone)]
pub struct Experiment<T: Real> {
    pub model: Arc<dyn ForwardModel<T>>,
    pub prior: Prior<T>,
    pub noise: NoiseModel<T>,
    /// Continuous design vector passed to the model (may be empty).
    pub design: Vec<T>,
    /// Replicate count `m` per simulated dataset.
    pub replicates: usize,
    /// Human-readable design descriptor for output rows.
    pub design_label: String,
}

impl<T: Real> Experiment<T> {
    pub fn new(
        model: Arc<dyn ForwardModel<T>>,
        prior: Prior<T>,
        noise: NoiseModel<T>,
        design: Vec<T>,
        replicates: usize,
        design_label: impl Into<String>,
    ) -> Result<Self> {
        if prior.dim() != model.param_dim() {
            return Err(Error::Domain(format!(
                "prior dimension {} does not match model parameter dimension {}",
                prior.dim(),
                model.param_dim()
            )));
        }
        if replicates == 0 {
            return Err(Error::Domain("need at least one replicate".into()));
        }
        Ok(Experiment {
            model,
            prior,
            noise,
            design,
            replicates,
            design_label: design_label.into(),
        })
    }
}
