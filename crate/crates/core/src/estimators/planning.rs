//! Cost model and sample-size planning. Given a pilot estimate carrying the
//! outer spread `c1` and inner relative variance `c2`, the rule
//! `M = (c1 / ((1 - gamma) TOL))^2`, `N = c2 / (gamma TOL)` splits a target
//! tolerance between outer noise and inner bias; Laplace schemes have no
//! inner stage and use `M = (c1 / TOL)^2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::EigEstimate;
use crate::real::Real;

/// The five estimation schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Nested Monte Carlo with prior inner sampling.
    Dlmc,
    /// Single-mode Laplace.
    La,
    /// Nested importance sampling with a single-mode Laplace proposal.
    Lais,
    /// Multimodal Laplace.
    Mla,
    /// Nested importance sampling with a multimodal Laplace proposal.
    Mnis,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Dlmc,
        Scheme::La,
        Scheme::Lais,
        Scheme::Mla,
        Scheme::Mnis,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Dlmc => "dlmc",
            Scheme::La => "la",
            Scheme::Lais => "lais",
            Scheme::Mla => "mla",
            Scheme::Mnis => "mnis",
        }
    }

    /// Whether the scheme runs an inner evidence loop.
    pub fn has_inner_stage(&self) -> bool {
        matches!(self, Scheme::Dlmc | Scheme::Lais | Scheme::Mnis)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::UnknownScheme {
                name: s.to_string(),
                valid: Scheme::ALL
                    .iter()
                    .map(|k| k.name())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }
}

/// Predicted total work for one estimator configuration.
#[derive(Clone, Debug)]
pub struct CostReport<T> {
    pub scheme: Scheme,
    pub outer: u64,
    pub inner: u64,
    pub mode_runs: u64,
    /// Total cost in the units of `cost_per_map` / `cost_per_lik`.
    pub total: T,
}

/// Work formula per scheme, with `M` outer samples, `N` inner samples, `n`
/// multistart runs, and unit costs for one MAP search and one likelihood
/// evaluation:
///
/// - `dlmc`: `M (C_l + N C_l)`
/// - `la`:   `M C_o`
/// - `lais`: `M (C_o + C_l + N C_l)`
/// - `mla`:  `M (n C_o + C_l)`
/// - `mnis`: `M (n C_o + C_l + N C_l)`
pub fn cost_model<T: Real>(
    scheme: Scheme,
    outer: u64,
    inner: u64,
    mode_runs: u64,
    cost_per_map: T,
    cost_per_lik: T,
) -> CostReport<T> {
    let m = T::of(outer as f64);
    let n_inner = T::of(inner as f64);
    let n_runs = T::of(mode_runs as f64);
    let per_sample = match scheme {
        Scheme::Dlmc => cost_per_lik + n_inner * cost_per_lik,
        Scheme::La => cost_per_map,
        Scheme::Lais => cost_per_map + cost_per_lik + n_inner * cost_per_lik,
        Scheme::Mla => n_runs * cost_per_map + cost_per_lik,
        Scheme::Mnis => n_runs * cost_per_map + cost_per_lik + n_inner * cost_per_lik,
    };
    CostReport {
        scheme,
        outer,
        inner,
        mode_runs,
        total: m * per_sample,
    }
}

/// Outer/inner sample counts recommended for a target tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleBudget {
    pub outer: usize,
    pub inner: usize,
}

/// Sizes a production run from a pilot: splits `tolerance` into a
/// `(1 - gamma)` outer share and a `gamma` inner-bias share.
pub fn estimate_sample_sizes<T: Real>(
    pilot: &EigEstimate<T>,
    tolerance: T,
    gamma: T,
) -> Result<SampleBudget> {
    if !(tolerance > T::zero()) || !tolerance.is_finite() {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::Domain("gamma must lie in (0, 1)".into()));
    }
    let c1 = pilot.outer_std;
    if !c1.is_finite() || !(c1 > T::zero()) {
        return Err(Error::DegeneratePilot(format!(
            "outer spread c1 = {c1} carries no variance information"
        )));
    }

    let ceil_usize = |x: T| -> Result<usize> {
        let v = x.ceil().to_f64().unwrap_or(f64::NAN);
        if !v.is_finite() || v < 0.0 || v > 1e12 {
            return Err(Error::DegeneratePilot(format!(
                "required sample count {v} is not representable"
            )));
        }
        Ok(v as usize)
    };

    if pilot.scheme.has_inner_stage() {
        let c2 = pilot.inner_rel_variance;
        if !c2.is_finite() || c2 < T::zero() {
            return Err(Error::DegeneratePilot(format!(
                "inner relative variance c2 = {c2} is unusable"
            )));
        }
        let mratio = c1 / ((T::one() - gamma) * tolerance);
        let outer = ceil_usize(mratio * mratio)?.max(2);
        let inner = ceil_usize(c2 / (gamma * tolerance))?.max(1);
        Ok(SampleBudget { outer, inner })
    } else {
        let mratio = c1 / tolerance;
        let outer = ceil_usize(mratio * mratio)?.max(2);
        Ok(SampleBudget { outer, inner: 0 })
    }
}
