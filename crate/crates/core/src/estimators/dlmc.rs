//! Nested Monte Carlo baseline: for each outer sample, draw
//! `theta_i ~ prior`, simulate data, and estimate the marginal likelihood by
//! averaging `p(y | theta_j)` over `N` fresh prior draws. Its inner average
//! underestimates the evidence at small `N`, which biases the EIG upward.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{nested_term, reduce_outcomes, EigEstimate, SampleOutcome, Scheme};
use crate::model::{simulate_observations, Experiment, NoiseModel};
use crate::posterior::PosteriorProblem;
use crate::real::Real;
use crate::rng::{stream, Role};

/// Nested Monte Carlo EIG with `outer` prior-predictive samples and `inner`
/// prior draws per evidence estimate. Requires calibrated noise.
pub fn eig_dlmc<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<EigEstimate<T>> {
    if outer < 2 {
        return Err(Error::Domain("need at least two outer samples".into()));
    }
    if inner == 0 {
        return Err(Error::Domain("need at least one inner sample".into()));
    }
    let sigma = match &exp.noise {
        NoiseModel::Calibrated { sigma2 } => sigma2.sqrt(),
        NoiseModel::Uncalibrated { .. } => {
            return Err(Error::Domain(
                "the nested Monte Carlo baseline requires calibrated noise".into(),
            ))
        }
    };

    let outcomes: Vec<SampleOutcome<T>> = (0..outer)
        .into_par_iter()
        .map(|i| dlmc_sample(exp, sigma, inner, seed, i as u64))
        .collect();

    reduce_outcomes(Scheme::Dlmc, outcomes, inner, 0)
}

fn dlmc_sample<T: Real>(
    exp: &Experiment<T>,
    sigma: T,
    inner: usize,
    seed: u64,
    index: u64,
) -> SampleOutcome<T> {
    let mut rng_outer = stream(seed, index, Role::Outer);
    let theta_true = exp.prior.sample(&mut rng_outer);
    let Ok(data) = simulate_observations(
        &*exp.model,
        &theta_true,
        &exp.design,
        sigma,
        exp.replicates,
        &mut rng_outer,
    ) else {
        return SampleOutcome::skipped();
    };
    let prob = PosteriorProblem::new(exp, &data);

    let Ok(numerator) = prob.log_likelihood(&theta_true, sigma) else {
        return SampleOutcome::skipped();
    };

    let mut rng_inner = stream(seed, index, Role::Inner);
    let mut inner_logs = Vec::with_capacity(inner);
    for _ in 0..inner {
        let theta_j = exp.prior.sample(&mut rng_inner);
        match prob.log_likelihood(&theta_j, sigma) {
            Ok(ll) => inner_logs.push(ll),
            Err(_) => return SampleOutcome::skipped(),
        }
    }

    let (term, rel_variance, underflow) = nested_term(numerator, &inner_logs);
    SampleOutcome {
        term,
        skipped: false,
        underflow,
        modes: 0,
        likelihood_evals: 1 + inner as u64,
        optimizer_runs: 0,
        rel_variance,
        spread: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::linear_gaussian::{linear_gaussian_eig, linear_gaussian_experiment};
    use crate::linalg::Mat;
    use crate::model::NoiseModel;

    fn one_dim_problem() -> (Experiment<f64>, f64) {
        let exp = linear_gaussian_experiment(Mat::identity(1), vec![1.0f64], 1.0, 1).unwrap();
        let truth = linear_gaussian_eig(&Mat::identity(1), &[1.0], 1.0, 1).unwrap();
        (exp, truth)
    }

    #[test]
    fn dlmc_recovers_the_closed_form_on_a_conjugate_problem() {
        let (exp, truth) = one_dim_problem();
        let est = eig_dlmc(&exp, 800, 800, 20240601).unwrap();
        assert!((truth - 0.5 * 2.0f64.ln()).abs() < 1e-12);
        let tol = 3.0 * est.std_error + 0.02;
        assert!(
            (est.value - truth).abs() < tol,
            "dlmc {} vs truth {truth} (tol {tol})",
            est.value
        );
        assert_eq!(est.likelihood_evals, 800 * 801);
        assert_eq!(est.skipped_samples, 0);
        assert_eq!(est.underflow_count, 0);
    }

    #[test]
    fn small_inner_budgets_bias_dlmc_upward() {
        let (exp, _) = one_dim_problem();
        let coarse = eig_dlmc(&exp, 600, 2, 7).unwrap();
        let fine = eig_dlmc(&exp, 600, 2000, 7).unwrap();
        // Jensen gap: E[-log mean] exceeds -log E[mean]; with N = 2 the gap
        // is far larger than the Monte Carlo noise of both runs.
        assert!(
            coarse.value > fine.value + 2.0 * (coarse.std_error + fine.std_error),
            "coarse {} fine {}",
            coarse.value,
            fine.value
        );
    }

    #[test]
    fn dlmc_rejects_uncalibrated_noise_and_tiny_budgets() {
        let (mut exp, _) = one_dim_problem();
        assert!(eig_dlmc(&exp, 1, 10, 0).is_err());
        assert!(eig_dlmc(&exp, 10, 0, 0).is_err());
        exp.noise = NoiseModel::uncalibrated(0.5, 1.5, 4).unwrap();
        let err = eig_dlmc(&exp, 10, 10, 0).unwrap_err();
        assert!(err.to_string().contains("calibrated"), "{err}");
    }

    #[test]
    fn dlmc_is_deterministic_in_the_seed() {
        let (exp, _) = one_dim_problem();
        let a = eig_dlmc(&exp, 50, 20, 99).unwrap();
        let b = eig_dlmc(&exp, 50, 20, 99).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.std_error, b.std_error);
        let c = eig_dlmc(&exp, 50, 20, 100).unwrap();
        assert_ne!(a.value, c.value);
    }
}
