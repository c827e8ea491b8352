//! Log-domain posterior kernels for one simulated dataset. With `m` replicate
//! rows `y_i` at design `xi`,
//! `log p(y | theta, sigma) = sum_i [ -|y_i - g(theta, xi)|^2 / (2 sigma^2)
//!   - (d_m / 2) log(2 pi sigma^2) ]`,
//! and the unnormalised posterior kernel adds the log prior. Nothing here
//! ever exponentiates a log-likelihood.

use crate::error::{fmt_vec, Error, Result};
use crate::linalg::{clamp_eigenvalues, Mat};
use crate::math::log_mean_exp;
use crate::model::{model_jacobian, ForwardModel, ObservationSet, Prior};
use crate::real::Real;

/// How observation noise enters the kernel: a known standard deviation, or a
/// set of draws to marginalise over.
#[derive(Clone, Copy, Debug)]
pub enum NoiseView<'a, T> {
    /// Known `sigma_e` (standard deviation).
    Calibrated(T),
    /// Average the likelihood over these `sigma_e` draws.
    Marginal(&'a [T]),
}

/// One dataset's posterior, borrowed from an [`crate::Experiment`].
#[derive(Clone, Copy)]
pub struct PosteriorProblem<'a, T: Real> {
    pub model: &'a dyn ForwardModel<T>,
    pub prior: &'a Prior<T>,
    pub xi: &'a [T],
    pub data: &'a ObservationSet<T>,
}

impl<'a, T: Real> PosteriorProblem<'a, T> {
    /// Binds one simulated dataset to its experiment.
    pub fn new(exp: &'a crate::model::Experiment<T>, data: &'a ObservationSet<T>) -> Self {
        PosteriorProblem {
            model: &*exp.model,
            prior: &exp.prior,
            xi: &exp.design,
            data,
        }
    }

    /// Total squared residual `sum_i |y_i - g(theta, xi)|^2`.
    ///
    /// This is the only place the forward model meets the data, so callers
    /// count one "likelihood evaluation" per call regardless of how many
    /// noise levels the result is reused for.
    pub fn residual_sum(&self, theta: &[T]) -> Result<T> {
        let g = self.model.evaluate(theta, self.xi);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteModel {
                theta: fmt_vec(theta),
            });
        }
        let mut acc = T::zero();
        for i in 0..self.data.replicates() {
            let row = self.data.row(i);
            for (c, &gc) in g.iter().enumerate() {
                let d = row[c] - gc;
                acc += d * d;
            }
        }
        Ok(acc)
    }

    /// Log-likelihood given a precomputed residual sum.
    pub fn log_likelihood_from_residual(&self, residual: T, sigma: T) -> T {
        let m = T::of(self.data.replicates() as f64);
        let dm = T::of(self.data.obs_dim() as f64);
        let s2 = sigma * sigma;
        let half = T::of(0.5);
        -residual / (s2 + s2) - m * dm * half * (T::ln_two_pi() + s2.ln())
    }

    /// `log p(y | theta, sigma)`; `sigma` must be positive.
    pub fn log_likelihood(&self, theta: &[T], sigma: T) -> Result<T> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::Domain(
                "likelihood needs a positive finite sigma".into(),
            ));
        }
        Ok(self.log_likelihood_from_residual(self.residual_sum(theta)?, sigma))
    }

    /// `log mean_l p(y | theta, sigma_l)` over noise draws.
    pub fn marginal_log_likelihood(&self, theta: &[T], sigmas: &[T]) -> Result<T> {
        if sigmas.is_empty() {
            return Err(Error::Domain(
                "marginal likelihood needs at least one sigma draw".into(),
            ));
        }
        if sigmas.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::Domain(
                "marginal likelihood needs positive finite sigma draws".into(),
            ));
        }
        let residual = self.residual_sum(theta)?;
        let logs: Vec<T> = sigmas
            .iter()
            .map(|&s| self.log_likelihood_from_residual(residual, s))
            .collect();
        Ok(log_mean_exp(&logs))
    }

    /// Log-likelihood under either noise view.
    pub fn log_likelihood_view(&self, theta: &[T], view: &NoiseView<'_, T>) -> Result<T> {
        match view {
            NoiseView::Calibrated(s) => self.log_likelihood(theta, *s),
            NoiseView::Marginal(ss) => self.marginal_log_likelihood(theta, ss),
        }
    }

    /// Negative unnormalised log posterior, `+inf` outside the prior support
    /// or where the model fails. This is the objective MAP searches minimise.
    pub fn neg_log_posterior(&self, theta: &[T], view: &NoiseView<'_, T>) -> T {
        let lp = self.prior.log_density(theta);
        if lp == T::neg_infinity() {
            return T::infinity();
        }
        match self.log_likelihood_view(theta, view) {
            Ok(ll) if ll.is_finite() || ll == T::neg_infinity() => -(ll + lp),
            _ => T::infinity(),
        }
    }

    /// Gauss-Newton curvature of the negative log posterior at `theta`:
    /// `H = m J^T J / sigma^2 + H_prior`, symmetrised and eigenvalue-clamped
    /// at `1e-10 tr(H) / d` so the result is strictly positive definite.
    ///
    /// Under a marginal view the noise enters through the effective precision
    /// `1 / sigma_eff^2 = sum_l gamma_l / sigma_l^2` with `gamma_l` the
    /// softmax of the per-draw log-likelihoods at `theta`.
    pub fn gauss_newton_hessian(&self, theta: &[T], view: &NoiseView<'_, T>) -> Result<Mat<T>> {
        let precision = match view {
            NoiseView::Calibrated(s) => {
                if !(*s > T::zero()) {
                    return Err(Error::Domain("sigma must be positive".into()));
                }
                (*s * *s).recip()
            }
            NoiseView::Marginal(ss) => {
                let residual = self.residual_sum(theta)?;
                let logs: Vec<T> = ss
                    .iter()
                    .map(|&s| self.log_likelihood_from_residual(residual, s))
                    .collect();
                let norm = crate::math::log_sum_exp(&logs);
                if !norm.is_finite() {
                    return Err(Error::SingularHessian {
                        theta: fmt_vec(theta),
                        detail: "noise marginalisation underflowed".into(),
                    });
                }
                let mut acc = T::zero();
                for (l, &s) in logs.iter().zip(ss.iter()) {
                    acc += (*l - norm).exp() / (s * s);
                }
                acc
            }
        };

        let jac = model_jacobian(self.model, theta, self.xi);
        let mut h = jac.gram();
        let m = T::of(self.data.replicates() as f64);
        h.scale_in_place(m * precision);
        h.add_diag(
            &self
                .prior
                .log_density_hessian_diag()
                .iter()
                .map(|&v| -v)
                .collect::<Vec<_>>(),
        );
        h.symmetrize();

        let d = T::of(theta.len() as f64);
        let tr = h.trace();
        if !tr.is_finite() || !(tr > T::zero()) {
            return Err(Error::SingularHessian {
                theta: fmt_vec(theta),
                detail: format!("trace {tr} is not positive"),
            });
        }
        let floor = T::of(1e-10) * tr / d;
        Ok(clamp_eigenvalues(&h, floor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::{simulate_observations, ObservationSet};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `g_j = c_j theta_j^2` with `c = (xi, 1 - xi/2, 1)`.
    struct Quad;
    impl ForwardModel<f64> for Quad {
        fn param_dim(&self) -> usize {
            3
        }
        fn obs_dim(&self) -> usize {
            3
        }
        fn evaluate(&self, t: &[f64], xi: &[f64]) -> Vec<f64> {
            let c = [xi[0], 1.0 - 0.5 * xi[0], 1.0];
            (0..3).map(|j| c[j] * t[j] * t[j]).collect()
        }
        fn jacobian(&self, t: &[f64], xi: &[f64]) -> Option<Mat<f64>> {
            let c = [xi[0], 1.0 - 0.5 * xi[0], 1.0];
            Some(Mat::diag(&[2.0 * c[0] * t[0], 2.0 * c[1] * t[1], 2.0 * c[2] * t[2]]))
        }
        fn name(&self) -> &str {
            "quad"
        }
    }

    fn quad_problem<'a>(
        prior: &'a Prior<f64>,
        xi: &'a [f64],
        data: &'a ObservationSet<f64>,
    ) -> PosteriorProblem<'a, f64> {
        PosteriorProblem {
            model: &Quad,
            prior,
            xi,
            data,
        }
    }

    #[test]
    fn zero_residual_likelihood_is_pure_normalisation() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let theta = [2.0, 3.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = simulate_observations(&Quad, &theta, &[1.0], 0.0, 1, &mut rng).unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        // m = 1, d_m = 3, sigma^2 = 4: -(3/2) log(8 pi).
        let want = -1.5 * (8.0 * std::f64::consts::PI).ln();
        assert!((prob.log_likelihood(&theta, 2.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn replicates_scale_the_likelihood_linearly_at_zero_residual() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let theta = [2.0, 3.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d1 = simulate_observations(&Quad, &theta, &[1.0], 0.0, 1, &mut rng).unwrap();
        let d10 = simulate_observations(&Quad, &theta, &[1.0], 0.0, 10, &mut rng).unwrap();
        let p1 = quad_problem(&prior, &[1.0], &d1);
        let p10 = quad_problem(&prior, &[1.0], &d10);
        let l1 = p1.log_likelihood(&theta, 2.0).unwrap();
        let l10 = p10.log_likelihood(&theta, 2.0).unwrap();
        assert!((l10 - 10.0 * l1).abs() < 1e-10);
    }

    #[test]
    fn huge_residuals_stay_finite_in_log_domain() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = simulate_observations(&Quad, &[9.0, 9.0, 9.0], &[1.0], 1e-3, 1, &mut rng)
            .unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        let ll = prob.log_likelihood(&[-9.0, 0.1, 0.1], 1e-3).unwrap();
        // Around -1e10: far below exp range, but must be a normal finite value.
        assert!(ll.is_finite());
        assert!(ll < -1e6);
    }

    #[test]
    fn neg_log_posterior_is_infinite_outside_the_box() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = simulate_observations(&Quad, &[1.0, 1.0, 1.0], &[1.0], 2.0, 1, &mut rng)
            .unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        let view = NoiseView::Calibrated(2.0);
        assert!(prob.neg_log_posterior(&[11.0, 0.0, 0.0], &view).is_infinite());
        assert!(prob.neg_log_posterior(&[1.0, 1.0, 1.0], &view).is_finite());
    }

    #[test]
    fn gauss_newton_hessian_matches_hand_computation() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let theta = [2.0, 3.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = simulate_observations(&Quad, &theta, &[1.0], 0.0, 1, &mut rng).unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        // J = diag(4, 3, 2), sigma^2 = 4, m = 1: H = diag(4, 2.25, 1).
        let h = prob
            .gauss_newton_hessian(&theta, &NoiseView::Calibrated(2.0))
            .unwrap();
        let want = [4.0, 2.25, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                let w = if r == c { want[r] } else { 0.0 };
                assert!((h.at(r, c) - w).abs() < 1e-9, "H[{r}{c}] = {}", h.at(r, c));
            }
        }
        // Ten replicates scale the data block tenfold.
        let d10 = simulate_observations(&Quad, &theta, &[1.0], 0.0, 10, &mut rng).unwrap();
        let p10 = quad_problem(&prior, &[1.0], &d10);
        let h10 = p10
            .gauss_newton_hessian(&theta, &NoiseView::Calibrated(2.0))
            .unwrap();
        assert!((h10.at(0, 0) - 40.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_prior_adds_its_precision_to_the_hessian() {
        let prior = Prior::gaussian(vec![0.0; 3], vec![0.5; 3]).unwrap();
        let theta = [2.0, 3.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = simulate_observations(&Quad, &theta, &[1.0], 0.0, 1, &mut rng).unwrap();
        let prob = PosteriorProblem {
            model: &Quad,
            prior: &prior,
            xi: &[1.0],
            data: &data,
        };
        let h = prob
            .gauss_newton_hessian(&theta, &NoiseView::Calibrated(2.0))
            .unwrap();
        assert!((h.at(0, 0) - 6.0).abs() < 1e-9);
        assert!((h.at(1, 1) - 4.25).abs() < 1e-9);
        assert!((h.at(2, 2) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn flat_directions_are_clamped_not_fatal() {
        // theta = 0 zeroes the quadratic model's jacobian; with a uniform
        // prior the raw curvature is the zero matrix.
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = simulate_observations(&Quad, &[1.0, 1.0, 1.0], &[1.0], 2.0, 1, &mut rng)
            .unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        let err = prob
            .gauss_newton_hessian(&[0.0, 0.0, 0.0], &NoiseView::Calibrated(2.0))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("singular"), "{msg}");
        assert!(msg.contains("[0, 0, 0]"), "{msg}");

        // One flat direction among curved ones is clamped instead.
        let h = prob
            .gauss_newton_hessian(&[0.0, 3.0, 1.0], &NoiseView::Calibrated(2.0))
            .unwrap();
        let (evals, _) = crate::linalg::sym_eigen(&h);
        assert!(evals[0] > 0.0);
        assert!(evals[0] < 1e-8);
    }

    #[test]
    fn marginal_likelihood_reduces_to_calibrated_for_one_draw() {
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = simulate_observations(&Quad, &[1.0, 2.0, 3.0], &[1.0], 1.0, 2, &mut rng)
            .unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        let theta = [1.1, 2.2, 2.9];
        let a = prob.log_likelihood(&theta, 1.3).unwrap();
        let b = prob.marginal_log_likelihood(&theta, &[1.3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_likelihood_matches_quadrature_on_a_sigma_grid() {
        // A fine midpoint grid over sigma makes log mean exp a quadrature rule;
        // compare against Simpson integration of the same integrand.
        let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = simulate_observations(&Quad, &[1.0, 2.0, 3.0], &[1.0], 1.0, 3, &mut rng)
            .unwrap();
        let prob = quad_problem(&prior, &[1.0], &data);
        let theta = [1.0, 2.0, 3.0];
        let (lo, hi) = (0.6_f64, 1.8_f64);

        let n = 4000;
        let grid: Vec<f64> = (0..n)
            .map(|k| lo + (k as f64 + 0.5) * (hi - lo) / n as f64)
            .collect();
        let marginal = prob.marginal_log_likelihood(&theta, &grid).unwrap();

        let r = prob.residual_sum(&theta).unwrap();
        let f = |s: f64| prob.log_likelihood_from_residual(r, s).exp();
        // Simpson with 2000 panels over [lo, hi], normalised by the width.
        let panels = 2000;
        let h = (hi - lo) / panels as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * h);
        }
        let integral = acc * h / 3.0 / (hi - lo);
        assert!(
            (marginal - integral.ln()).abs() < 1e-5,
            "marginal {marginal} vs quadrature {}",
            integral.ln()
        );
    }

    proptest! {
        #[test]
        fn marginal_likelihood_ignores_sigma_order(
            perm in Just(()),
            seed in 0u64..50,
        ) {
            let _ = perm;
            let prior = Prior::uniform(vec![-10.0; 3], vec![10.0; 3]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = simulate_observations(&Quad, &[1.0, 2.0, 3.0], &[1.0], 1.0, 1, &mut rng)
                .unwrap();
            let prob = quad_problem(&prior, &[1.0], &data);
            let theta = [0.9, 2.1, 3.2];
            let sigmas = [0.7, 1.9, 1.1, 0.8, 1.5];
            let mut rev = sigmas;
            rev.reverse();
            let a = prob.marginal_log_likelihood(&theta, &sigmas).unwrap();
            let b = prob.marginal_log_likelihood(&theta, &rev).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
