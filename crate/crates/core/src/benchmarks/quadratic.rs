//! Sign-symmetric quadratic model: `g_j(theta, xi) = c_j(xi) theta_j^2` with
//! coefficients `c = (xi, 1 - xi/2, 1)` and a uniform prior on `(-10, 10)^3`.
//!
//! The likelihood depends on `theta` only through the squares `theta_j^2`, so
//! every sign flip of a posterior mode is again a mode: generic data yields
//! `2^3 = 8` of them, all with identical mass. That makes the model a sharp
//! stress test for mode-finding and for single-mode estimators, while the
//! reflection symmetry gives an exact oracle for where the modes must sit.

use crate::error::Result;
use crate::linalg::Mat;
use crate::model::{Experiment, ForwardModel, NoiseModel, ObservationSet, Prior};
use crate::real::Real;

use std::sync::Arc;

const PARAM_DIM: usize = 3;
const BOUND: f64 = 10.0;

/// Three-parameter quadratic forward model with design-dependent coefficients.
pub struct QuadraticModel;

impl QuadraticModel {
    fn coefficients<T: Real>(xi: T) -> [T; PARAM_DIM] {
        [xi, T::one() - xi / T::of(2.0), T::one()]
    }
}

impl<T: Real> ForwardModel<T> for QuadraticModel {
    fn param_dim(&self) -> usize {
        PARAM_DIM
    }

    fn obs_dim(&self) -> usize {
        PARAM_DIM
    }

    fn evaluate(&self, theta: &[T], xi: &[T]) -> Vec<T> {
        let c = Self::coefficients(xi[0]);
        (0..PARAM_DIM).map(|j| c[j] * theta[j] * theta[j]).collect()
    }

    fn jacobian(&self, theta: &[T], xi: &[T]) -> Option<Mat<T>> {
        let c = Self::coefficients(xi[0]);
        let two = T::of(2.0);
        let mut jac = Mat::zeros(PARAM_DIM, PARAM_DIM);
        for j in 0..PARAM_DIM {
            jac.set(j, j, two * c[j] * theta[j]);
        }
        Some(jac)
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}

/// Builds the quadratic benchmark at design `xi` with calibrated noise
/// variance `sigma2`.
pub fn quadratic_experiment<T: Real>(xi: T, sigma2: T) -> Result<Experiment<T>> {
    let lo = vec![T::of(-BOUND); PARAM_DIM];
    let hi = vec![T::of(BOUND); PARAM_DIM];
    Experiment::new(
        Arc::new(QuadraticModel),
        Prior::uniform(lo, hi)?,
        NoiseModel::calibrated(sigma2)?,
        vec![xi],
        1,
        format!("xi={xi}"),
    )
}

/// Exact maximum-likelihood mode locations for observed data at design `xi`.
///
/// Componentwise the likelihood peaks where `c_j theta_j^2` matches the mean
/// observation, so `theta_j = +-sqrt(ybar_j / c_j)` when that ratio is
/// positive and `0` otherwise; the full mode set is the cartesian product of
/// the per-axis roots, clipped to the prior box.
pub fn quadratic_mode_oracle<T: Real>(data: &ObservationSet<T>, xi: T) -> Vec<Vec<T>> {
    let ybar = data.mean_row();
    let c = QuadraticModel::coefficients(xi);
    let bound = T::of(BOUND);
    let mut axis_roots: Vec<Vec<T>> = Vec::with_capacity(PARAM_DIM);
    for j in 0..PARAM_DIM {
        let ratio = if c[j] == T::zero() { T::zero() } else { ybar[j] / c[j] };
        if ratio > T::zero() {
            let root = ratio.sqrt().min(bound);
            axis_roots.push(vec![-root, root]);
        } else {
            axis_roots.push(vec![T::zero()]);
        }
    }
    let mut modes: Vec<Vec<T>> = vec![Vec::new()];
    for roots in &axis_roots {
        let mut next = Vec::with_capacity(modes.len() * roots.len());
        for stem in &modes {
            for &r in roots {
                let mut m = stem.clone();
                m.push(r);
                next.push(m);
            }
        }
        modes = next;
    }
    modes
}

#[allow(clippy::excessive_precision)]
#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_observations;
    use crate::posterior::{NoiseView, PosteriorProblem};
    use crate::rng;

    fn exact_data(values: [f64; 3]) -> ObservationSet<f64> {
        ObservationSet::new(Mat::from_rows(&[&values]))
    }

    #[test]
    fn evaluate_matches_hand_computation() {
        let g = <QuadraticModel as ForwardModel<f64>>::evaluate(
            &QuadraticModel,
            &[2.0, 3.0, 1.0],
            &[1.0],
        );
        assert_eq!(g, vec![4.0, 4.5, 1.0]);
    }

    #[test]
    fn oracle_recovers_all_eight_sign_combinations() {
        let data = exact_data([4.0, 4.5, 1.0]);
        let modes = quadratic_mode_oracle(&data, 1.0);
        assert_eq!(modes.len(), 8);
        for s0 in [-2.0, 2.0] {
            for s1 in [-3.0, 3.0] {
                for s2 in [-1.0, 1.0] {
                    assert!(modes
                        .iter()
                        .any(|m| (m[0] - s0).abs() < 1e-12
                            && (m[1] - s1).abs() < 1e-12
                            && (m[2] - s2).abs() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn negative_observation_collapses_an_axis_to_the_origin() {
        let data = exact_data([-1.0, 4.5, 1.0]);
        let modes = quadratic_mode_oracle(&data, 1.0);
        assert_eq!(modes.len(), 4);
        assert!(modes.iter().all(|m| m[0] == 0.0));
    }

    #[test]
    fn oracle_clips_roots_to_the_prior_box() {
        let data = exact_data([400.0, 1.0, 1.0]);
        let modes = quadratic_mode_oracle(&data, 1.0);
        assert!(modes.iter().all(|m| m[0].abs() <= 10.0));
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let exp = quadratic_experiment(1.3f64, 4.0).unwrap();
        let mut rng = rng::stream(99, 0, rng::Role::Outer);
        for _ in 0..50 {
            let theta = exp.prior.sample(&mut rng);
            let jac = exp.model.jacobian(&theta, &exp.design).unwrap();
            let fd = crate::model::model_jacobian(exp.model.as_ref(), &theta, &exp.design);
            for r in 0..3 {
                for c in 0..3 {
                    assert!(
                        (jac.at(r, c) - fd.at(r, c)).abs() < 1e-5 * (1.0 + jac.at(r, c).abs()),
                        "mismatch at ({r}, {c})"
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_modes_are_stationary_points_of_the_posterior() {
        let exp = quadratic_experiment(1.0f64, 4.0).unwrap();
        let truth = vec![2.0, 3.0, 1.0];
        let mut rng = rng::stream(4, 0, rng::Role::Outer);
        let data =
            simulate_observations(exp.model.as_ref(), &truth, &exp.design, 2.0, 1, &mut rng)
                .unwrap();
        let prob = PosteriorProblem::new(&exp, &data);
        let view = NoiseView::Calibrated(4.0);
        for mode in quadratic_mode_oracle(&data, 1.0) {
            if mode.iter().any(|&x| x == 0.0 || x.abs() >= 10.0 - 1e-9) {
                continue;
            }
            let mut f = |t: &[f64]| prob.neg_log_posterior(t, &view);
            let g = crate::math::central_gradient(&mut f, &mode, 1e-6);
            let norm = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!(norm < 1e-5, "gradient {norm} at {mode:?}");
        }
    }
}
