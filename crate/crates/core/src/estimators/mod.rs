//! Expected-information-gain estimators. All of them average a per-dataset
//! quantity over `M` outer prior-predictive samples; they differ in how the
//! inner marginal likelihood or KL divergence is obtained. Work per outer
//! sample is a pure function of `(seed, sample index)`, so results are
//! identical for any worker count.

pub mod dlmc;
pub mod laplace;
pub mod nis;
pub mod planning;

pub use dlmc::eig_dlmc;
pub use laplace::{analytic_kl_mixture, eig_la, eig_mla, LaplaceOptions};
pub use nis::{
    eig_lais, eig_mnis, eig_mnis_uncalibrated, eig_nis_with_proposal, LaplaceProposal,
    PriorProposal, ProposalBuilder, ProposalCost,
};
pub use planning::{cost_model, estimate_sample_sizes, CostReport, SampleBudget, Scheme};

use crate::error::{Error, Result};
use crate::math::mean_and_std;
use crate::real::Real;

/// Fraction of outer samples that may be skipped before the run is rejected.
const SKIP_LIMIT_PERCENT: u32 = 10;

/// One EIG estimate with its uncertainty and work counters.
#[derive(Clone, Debug)]
pub struct EigEstimate<T> {
    pub scheme: Scheme,
    /// Estimated expected information gain in nats.
    pub value: T,
    /// Monte Carlo standard error of `value`.
    pub std_error: T,
    /// Outer samples retained (skips excluded).
    pub outer_samples: usize,
    /// Inner samples per outer sample (0 for Laplace schemes).
    pub inner_samples: usize,
    /// Multistart runs per outer sample (0 when no search is involved).
    pub mode_search_runs: usize,
    /// Residual computations performed outside optimizer line searches:
    /// numerators, mixture peak values, and inner evidence samples.
    pub likelihood_evals: u64,
    /// Local optimisation runs launched.
    pub optimizer_runs: u64,
    /// Outer samples whose inner evidence underflowed to zero.
    pub underflow_count: u64,
    /// Outer samples dropped because a search or model evaluation failed.
    pub skipped_samples: usize,
    /// Standard deviation of the per-sample terms (the `c1` of the
    /// sample-size rule; `std_error = c1 / sqrt(outer_samples)`).
    pub outer_std: T,
    /// Half the mean relative variance of the inner evidence estimator (the
    /// `c2` of the sample-size rule; zero for Laplace schemes).
    pub inner_rel_variance: T,
    /// Worst observed max/median ratio of the inner importance weights
    /// across outer samples (tail-heaviness diagnostic; NaN when the scheme
    /// has no inner stage).
    pub proposal_spread: T,
    /// Set when `proposal_spread` exceeds `1e3`.
    pub proposal_unstable: bool,
    /// Mean number of retained mixture components per outer sample.
    pub avg_modes: T,
}

/// Per-outer-sample bookkeeping gathered by each estimator.
#[derive(Clone, Debug)]
pub(crate) struct SampleOutcome<T> {
    pub term: T,
    pub skipped: bool,
    pub underflow: bool,
    pub modes: usize,
    pub likelihood_evals: u64,
    pub optimizer_runs: u64,
    pub rel_variance: Option<T>,
    pub spread: Option<T>,
}

impl<T: Real> SampleOutcome<T> {
    pub fn skipped() -> Self {
        SampleOutcome {
            term: T::nan(),
            skipped: true,
            underflow: false,
            modes: 0,
            likelihood_evals: 0,
            optimizer_runs: 0,
            rel_variance: None,
            spread: None,
        }
    }
}

/// Folds per-sample outcomes into an estimate, enforcing the skip limit.
pub(crate) fn reduce_outcomes<T: Real>(
    scheme: Scheme,
    outcomes: Vec<SampleOutcome<T>>,
    inner_samples: usize,
    mode_search_runs: usize,
) -> Result<EigEstimate<T>> {
    let total = outcomes.len();
    let skipped = outcomes.iter().filter(|o| o.skipped).count();
    if skipped * 100 > total * SKIP_LIMIT_PERCENT as usize {
        return Err(Error::TooManySkips {
            skipped,
            total,
            limit_percent: SKIP_LIMIT_PERCENT,
        });
    }

    let terms: Vec<T> = outcomes
        .iter()
        .filter(|o| !o.skipped)
        .map(|o| o.term)
        .collect();
    if terms.len() < 2 {
        return Err(Error::Domain(
            "fewer than two retained outer samples".into(),
        ));
    }

    let (value, outer_std, std_error) = if terms.iter().all(|t| t.is_finite()) {
        let (mean, std) = mean_and_std(&terms);
        (mean, std, std / T::of(terms.len() as f64).sqrt())
    } else {
        // An infinite term (total inner underflow) makes the average
        // infinite; report that honestly rather than masking it.
        (T::infinity(), T::infinity(), T::infinity())
    };

    let mut likelihood_evals = 0u64;
    let mut optimizer_runs = 0u64;
    let mut underflow_count = 0u64;
    let mut mode_sum = 0usize;
    let mut relvars: Vec<T> = Vec::new();
    let mut spread = T::nan();
    for o in &outcomes {
        likelihood_evals += o.likelihood_evals;
        optimizer_runs += o.optimizer_runs;
        if o.skipped {
            continue;
        }
        if o.underflow {
            underflow_count += 1;
        }
        mode_sum += o.modes;
        if let Some(rv) = o.rel_variance {
            relvars.push(rv);
        }
        if let Some(s) = o.spread {
            if spread.is_nan() || s > spread {
                spread = s;
            }
        }
    }

    let inner_rel_variance = if relvars.is_empty() {
        T::zero()
    } else {
        let (mean_rv, _) = mean_and_std(&relvars);
        T::of(0.5) * mean_rv
    };

    Ok(EigEstimate {
        scheme,
        value,
        std_error,
        outer_samples: terms.len(),
        inner_samples,
        mode_search_runs,
        likelihood_evals,
        optimizer_runs,
        underflow_count,
        skipped_samples: skipped,
        outer_std,
        inner_rel_variance,
        proposal_spread: spread,
        proposal_unstable: spread.is_finite() && spread > T::of(1e3),
        avg_modes: T::of(mode_sum as f64) / T::of(terms.len() as f64),
    })
}

/// Shared nested-evidence arithmetic: given the numerator log-likelihood and
/// the inner log contributions, returns `(term, relative variance,
/// underflowed)`. The term is `+inf` when every inner contribution vanished.
pub(crate) fn nested_term<T: Real>(numerator: T, inner: &[T]) -> (T, Option<T>, bool) {
    use crate::math::{log_mean_exp, log_sum_exp};
    let log_evidence = log_mean_exp(inner);
    if log_evidence == T::neg_infinity() {
        return (T::infinity(), None, true);
    }
    // Relative per-draw variance of exp(l): E[x^2]/E[x]^2 - 1, in log space.
    let n = T::of(inner.len() as f64).ln();
    let doubled: Vec<T> = inner.iter().map(|&l| l + l).collect();
    let log_m2 = log_sum_exp(&doubled) - n;
    let rel = (log_m2 - log_evidence - log_evidence).exp() - T::one();
    (numerator - log_evidence, Some(rel.max(T::zero())), false)
}
