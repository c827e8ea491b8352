//! Nested importance sampling. The inner marginal-likelihood estimate draws
//! from a per-dataset proposal `q` instead of the prior:
//!
//! `log L_i = logsumexp_j [ log p(y_i | theta_j) + log p(theta_j)
//!            - log q(theta_j) ] - log N`,
//!
//! with draws that land outside the prior support contributing zero. The
//! proposal is a Laplace mixture over all discovered modes (`eig_mnis`), its
//! single best mode (`eig_lais`), or the prior itself (diagnostics). Mode
//! searches are anchored at the parameter draw behind each simulated dataset
//! in addition to their random starts. With an
//! unknown noise level, data are simulated at a drawn `sigma_e` and every
//! likelihood is replaced by its average over fresh `sigma` draws
//! (`eig_mnis_uncalibrated`).

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{nested_term, reduce_outcomes, EigEstimate, SampleOutcome, Scheme};
use crate::mixture::{fit_laplace_mixture, GaussianMixture};
use crate::model::{simulate_observations, Experiment, NoiseModel};
use crate::modes::multistart_mode_search;
use crate::optimize::SearchConfig;
use crate::posterior::{NoiseView, PosteriorProblem};
use crate::real::Real;
use crate::rng::{stream, Role};

/// Work expended while building one proposal.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProposalCost {
    pub optimizer_runs: u64,
    /// Residual computations spent on peak values and curvature.
    pub likelihood_evals: u64,
}

/// Strategy for constructing the per-dataset importance proposal. `anchors`
/// are known good parameter points (the simulator's own draw) that earn one
/// deterministic search run each.
pub trait ProposalBuilder<T: Real>: Send + Sync {
    fn build(
        &self,
        prob: &PosteriorProblem<'_, T>,
        view: &NoiseView<'_, T>,
        search: &SearchConfig<T>,
        anchors: &[Vec<T>],
        rng: &mut ChaCha8Rng,
    ) -> Result<(GaussianMixture<T>, ProposalCost)>;

    /// How many retained components count as "modes" for diagnostics.
    fn counts_modes(&self) -> bool {
        true
    }
}

/// Laplace mixture over the discovered modes; `top_mode_only` restricts the
/// proposal to the best mode (the single-mode importance-sampling variant).
#[derive(Clone, Copy, Debug)]
pub struct LaplaceProposal {
    pub top_mode_only: bool,
}

impl<T: Real> ProposalBuilder<T> for LaplaceProposal {
    fn build(
        &self,
        prob: &PosteriorProblem<'_, T>,
        view: &NoiseView<'_, T>,
        search: &SearchConfig<T>,
        anchors: &[Vec<T>],
        rng: &mut ChaCha8Rng,
    ) -> Result<(GaussianMixture<T>, ProposalCost)> {
        let mut objective = |theta: &[T]| prob.neg_log_posterior(theta, view);
        let blocks = prob.model.theta_blocks();
        let found =
            multistart_mode_search(&mut objective, prob.prior, search, Some(&blocks), anchors, rng)?;
        let keep = if self.top_mode_only {
            1
        } else {
            found.modes.len()
        };
        let locations: Vec<Vec<T>> = found
            .modes
            .iter()
            .take(keep)
            .map(|m| m.location.clone())
            .collect();
        let mix = fit_laplace_mixture(prob, view, &locations, search.weight_floor)?;
        // Fitting evaluates the kernel once per mode; the marginal-noise view
        // costs one extra residual per mode for the effective curvature.
        let per_mode = match view {
            NoiseView::Calibrated(_) => 1,
            NoiseView::Marginal(_) => 2,
        };
        Ok((
            mix,
            ProposalCost {
                optimizer_runs: (found.attempted + found.polished) as u64,
                likelihood_evals: (locations.len() * per_mode) as u64,
            },
        ))
    }
}

/// The Gaussian prior itself as proposal. Consumes no search randomness and
/// draws exactly like `Prior::sample`, so the estimate coincides with nested
/// Monte Carlo on shared streams; used to validate the importance-weight
/// arithmetic.
#[derive(Clone, Copy, Debug)]
pub struct PriorProposal;

impl<T: Real> ProposalBuilder<T> for PriorProposal {
    fn build(
        &self,
        prob: &PosteriorProblem<'_, T>,
        _view: &NoiseView<'_, T>,
        _search: &SearchConfig<T>,
        _anchors: &[Vec<T>],
        _rng: &mut ChaCha8Rng,
    ) -> Result<(GaussianMixture<T>, ProposalCost)> {
        Ok((GaussianMixture::from_prior(prob.prior)?, ProposalCost::default()))
    }

    fn counts_modes(&self) -> bool {
        false
    }
}

/// Nested importance sampling with the multimodal Laplace proposal.
/// Requires calibrated noise; see [`eig_mnis_uncalibrated`] otherwise.
pub fn eig_mnis<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
) -> Result<EigEstimate<T>> {
    require_calibrated(exp, "eig_mnis")?;
    run_nis(
        exp,
        outer,
        inner,
        search,
        seed,
        &LaplaceProposal {
            top_mode_only: false,
        },
        Scheme::Mnis,
    )
}

/// Single-mode Laplace importance sampling: identical machinery restricted
/// to the best mode.
pub fn eig_lais<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
) -> Result<EigEstimate<T>> {
    require_calibrated(exp, "eig_lais")?;
    run_nis(
        exp,
        outer,
        inner,
        search,
        seed,
        &LaplaceProposal {
            top_mode_only: true,
        },
        Scheme::Lais,
    )
}

/// Nested importance sampling with an unknown noise level: ground truth
/// `sigma_e` is drawn per outer sample, and both the numerator and the inner
/// evidence marginalise the likelihood over the same fresh `sigma` draws.
pub fn eig_mnis_uncalibrated<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
) -> Result<EigEstimate<T>> {
    match &exp.noise {
        NoiseModel::Uncalibrated { .. } => run_nis(
            exp,
            outer,
            inner,
            search,
            seed,
            &LaplaceProposal {
                top_mode_only: false,
            },
            Scheme::Mnis,
        ),
        NoiseModel::Calibrated { .. } => Err(Error::Domain(
            "eig_mnis_uncalibrated requires an uncalibrated noise model".into(),
        )),
    }
}

/// Nested importance sampling with a caller-supplied proposal strategy.
pub fn eig_nis_with_proposal<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
    proposal: &dyn ProposalBuilder<T>,
) -> Result<EigEstimate<T>> {
    run_nis(exp, outer, inner, search, seed, proposal, Scheme::Mnis)
}

fn require_calibrated<T: Real>(exp: &Experiment<T>, what: &str) -> Result<()> {
    match &exp.noise {
        NoiseModel::Calibrated { .. } => Ok(()),
        NoiseModel::Uncalibrated { .. } => Err(Error::Domain(format!(
            "{what} requires calibrated noise (use eig_mnis_uncalibrated)"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_nis<T: Real>(
    exp: &Experiment<T>,
    outer: usize,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
    proposal: &dyn ProposalBuilder<T>,
    scheme: Scheme,
) -> Result<EigEstimate<T>> {
    if outer < 2 {
        return Err(Error::Domain("need at least two outer samples".into()));
    }
    if inner == 0 {
        return Err(Error::Domain("need at least one inner sample".into()));
    }

    let outcomes: Vec<SampleOutcome<T>> = (0..outer)
        .into_par_iter()
        .map(|i| nis_sample(exp, inner, search, seed, i as u64, proposal))
        .collect();
    reduce_outcomes(scheme, outcomes, inner, search.starts)
}

fn nis_sample<T: Real>(
    exp: &Experiment<T>,
    inner: usize,
    search: &SearchConfig<T>,
    seed: u64,
    index: u64,
    proposal: &dyn ProposalBuilder<T>,
) -> SampleOutcome<T> {
    // Ground truth, noise level, and data all come from the outer stream.
    let mut rng_outer = stream(seed, index, Role::Outer);
    let theta_true = exp.prior.sample(&mut rng_outer);
    let sigma_sim = exp.noise.draw_sigma(&mut rng_outer);
    let Ok(data) = simulate_observations(
        &*exp.model,
        &theta_true,
        &exp.design,
        sigma_sim,
        exp.replicates,
        &mut rng_outer,
    ) else {
        return SampleOutcome::skipped();
    };
    let prob = PosteriorProblem::new(exp, &data);

    // Marginalisation draws live on their own stream so calibrated and
    // uncalibrated runs stay comparable sample by sample.
    let sigma_draws: Vec<T> = match &exp.noise {
        NoiseModel::Calibrated { .. } => Vec::new(),
        NoiseModel::Uncalibrated { samples, .. } => {
            let mut rng_sigma = stream(seed, index, Role::Sigma);
            (0..*samples)
                .map(|_| exp.noise.draw_sigma(&mut rng_sigma))
                .collect()
        }
    };
    let view = match &exp.noise {
        NoiseModel::Calibrated { sigma2 } => NoiseView::Calibrated(sigma2.sqrt()),
        NoiseModel::Uncalibrated { .. } => NoiseView::Marginal(&sigma_draws),
    };

    let Ok(numerator) = prob.log_likelihood_view(&theta_true, &view) else {
        return SampleOutcome::skipped();
    };

    // The dominant posterior mode sits within one local run of the draw the
    // data came from, so that draw anchors the search: a dataset whose mode
    // basin is too small for the random starts still gets a covering
    // proposal.
    let mut rng_search = stream(seed, index, Role::Search);
    let anchors = std::slice::from_ref(&theta_true);
    let Ok((mix, cost)) = proposal.build(&prob, &view, search, anchors, &mut rng_search) else {
        return SampleOutcome::skipped();
    };

    // Inner evidence: importance-weighted likelihood under the proposal.
    let mut rng_inner = stream(seed, index, Role::Inner);
    let mut inner_logs = Vec::with_capacity(inner);
    let mut inner_evals = 0u64;
    for _ in 0..inner {
        let theta_j = mix.sample(&mut rng_inner);
        let log_prior = exp.prior.log_density(&theta_j);
        if log_prior == T::neg_infinity() {
            // Outside the support: zero contribution, no model evaluation.
            inner_logs.push(T::neg_infinity());
            continue;
        }
        let log_q = mix.log_pdf(&theta_j);
        let Ok(ll) = prob.log_likelihood_view(&theta_j, &view) else {
            return SampleOutcome::skipped();
        };
        inner_evals += 1;
        inner_logs.push(ll + log_prior - log_q);
    }

    let (term, rel_variance, underflow) = nested_term(numerator, &inner_logs);
    // A proposal that matches the integrand gives near-constant log weights;
    // heavy right tails are what destabilise the evidence estimate.
    let mut weights = inner_logs.clone();
    let spread = weight_spread(&mut weights);

    SampleOutcome {
        term,
        skipped: false,
        underflow,
        modes: if proposal.counts_modes() { mix.len() } else { 0 },
        likelihood_evals: 1 + cost.likelihood_evals + inner_evals,
        optimizer_runs: cost.optimizer_runs,
        rel_variance,
        spread,
    }
}

/// `exp(max - median)` over the finite inner importance log weights.
fn weight_spread<T: Real>(betas: &mut [T]) -> Option<T> {
    if betas.len() < 2 {
        return None;
    }
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let max = betas[betas.len() - 1];
    let median = betas[betas.len() / 2];
    if !max.is_finite() || !median.is_finite() {
        return None;
    }
    Some((max - median).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::linear_gaussian::{linear_gaussian_eig, linear_gaussian_experiment};
    use crate::estimators::eig_dlmc;
    use crate::linalg::Mat;

    fn gaussian_problem() -> (Experiment<f64>, f64) {
        let exp = linear_gaussian_experiment(Mat::identity(2), vec![1.0f64, 1.0], 1.0, 1).unwrap();
        let truth = linear_gaussian_eig(&Mat::identity(2), &[1.0, 1.0], 1.0, 1).unwrap();
        (exp, truth)
    }

    #[test]
    fn mnis_recovers_the_closed_form() {
        let (exp, truth) = gaussian_problem();
        let search = SearchConfig {
            starts: 5,
            ..SearchConfig::default()
        };
        let est = eig_mnis(&exp, 400, 64, &search, 12345).unwrap();
        let tol = 3.0 * est.std_error + 0.02;
        assert!(
            (est.value - truth).abs() < tol,
            "mnis {} vs {truth} (tol {tol})",
            est.value
        );
        assert!(est.proposal_spread.is_finite());
        assert!(est.proposal_spread >= 1.0);
        assert!(!est.proposal_unstable);
    }

    #[test]
    fn prior_proposal_reproduces_nested_monte_carlo_exactly() {
        // Same streams, same draw arithmetic: the importance weights reduce
        // to one and the two estimators agree to floating-point noise.
        let (exp, _) = gaussian_problem();
        let search = SearchConfig::default();
        let seed = 777;
        let nis = eig_nis_with_proposal(&exp, 300, 50, &search, seed, &PriorProposal).unwrap();
        let dlmc = eig_dlmc(&exp, 300, 50, seed).unwrap();
        assert!(
            (nis.value - dlmc.value).abs() < 1e-12,
            "nis {} dlmc {}",
            nis.value,
            dlmc.value
        );
        assert!((nis.std_error - dlmc.std_error).abs() < 1e-12);
    }

    #[test]
    fn lais_is_bitwise_identical_to_mnis_when_one_mode_exists() {
        let (exp, _) = gaussian_problem();
        let search = SearchConfig {
            starts: 6,
            ..SearchConfig::default()
        };
        let a = eig_mnis(&exp, 60, 32, &search, 5).unwrap();
        let b = eig_lais(&exp, 60, 32, &search, 5).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.std_error, b.std_error);
        assert_eq!(a.likelihood_evals, b.likelihood_evals);
        assert!((a.avg_modes - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_model_mismatches_are_rejected() {
        let (mut exp, _) = gaussian_problem();
        assert!(eig_mnis_uncalibrated(&exp, 10, 10, &SearchConfig::default(), 0).is_err());
        exp.noise = NoiseModel::uncalibrated(0.5, 1.5, 4).unwrap();
        assert!(eig_mnis(&exp, 10, 10, &SearchConfig::default(), 0).is_err());
        assert!(eig_lais(&exp, 10, 10, &SearchConfig::default(), 0).is_err());
    }

    #[test]
    fn nearly_degenerate_noise_interval_matches_the_calibrated_run() {
        let (exp, truth) = gaussian_problem();
        let mut uncal = exp.clone();
        uncal.noise = NoiseModel::uncalibrated(0.999, 1.001, 3).unwrap();
        let search = SearchConfig {
            starts: 5,
            ..SearchConfig::default()
        };
        let cal = eig_mnis(&exp, 400, 64, &search, 2024).unwrap();
        let un = eig_mnis_uncalibrated(&uncal, 400, 64, &search, 2024).unwrap();
        let tol = 3.0 * (cal.std_error + un.std_error) + 0.02;
        assert!(
            (cal.value - un.value).abs() < tol,
            "calibrated {} vs uncalibrated {} (tol {tol}, truth {truth})",
            cal.value,
            un.value
        );
    }

    #[test]
    fn weight_spread_summarises_tail_heaviness() {
        let mut flat = vec![0.0f64; 10];
        assert!((weight_spread(&mut flat).unwrap() - 1.0).abs() < 1e-12);
        let mut skewed = vec![0.0, 0.0, 0.0, 0.0, (1e6f64).ln()];
        assert!(weight_spread(&mut skewed).unwrap() > 1e5);
        let mut with_rejects = vec![f64::NEG_INFINITY; 5];
        assert!(weight_spread(&mut with_rejects).is_none());
    }
}
