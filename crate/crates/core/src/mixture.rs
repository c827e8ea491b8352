//! Gaussian-mixture surrogate assembled from local Laplace fits. Each mode
//! contributes `N(theta_k, Sigma_k)` with `Sigma_k = H_k^{-1}`, and carries
//! the Laplace mass `l_k = log kernel(theta_k) + (d/2) log 2 pi
//! + (1/2) log det Sigma_k`; weights are the softmax of `l_k`, floored and
//! renormalised.

use rand::Rng;

use crate::error::{fmt_vec, Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::math::log_sum_exp;
use crate::model::Prior;
use crate::posterior::{NoiseView, PosteriorProblem};
use crate::real::Real;

/// One mixture component: a local Gaussian approximation of the posterior.
#[derive(Clone, Debug)]
pub struct LaplaceMode<T> {
    pub location: Vec<T>,
    pub covariance: Mat<T>,
    /// Posterior log kernel at the mode (not negated).
    pub peak_log_kernel: T,
    pub weight: T,
    chol: Cholesky<T>,
}

impl<T: Real> LaplaceMode<T> {
    /// `log det Sigma_k`.
    pub fn log_det_cov(&self) -> T {
        self.chol.log_det()
    }
}

/// Weighted Gaussian mixture used as posterior surrogate and proposal.
#[derive(Clone, Debug)]
pub struct GaussianMixture<T> {
    modes: Vec<LaplaceMode<T>>,
    dim: usize,
}

impl<T: Real> GaussianMixture<T> {
    /// Builds the mixture from `(location, covariance, peak log kernel)`
    /// triples, computing softmax weights and pruning those below `floor`.
    pub fn from_laplace_fits(
        fits: Vec<(Vec<T>, Mat<T>, T)>,
        weight_floor: T,
    ) -> Result<Self> {
        if fits.is_empty() {
            return Err(Error::Domain("mixture needs at least one mode".into()));
        }
        let dim = fits[0].0.len();
        let half = T::of(0.5);
        let mut partial: Vec<(Vec<T>, Mat<T>, T, Cholesky<T>, T)> = Vec::with_capacity(fits.len());
        for (loc, cov, peak) in fits {
            if loc.len() != dim {
                return Err(Error::Domain("mixture modes disagree on dimension".into()));
            }
            if !peak.is_finite() {
                return Err(Error::Domain(format!(
                    "mode at {} has a non-finite peak log kernel",
                    fmt_vec(&loc)
                )));
            }
            let chol = Cholesky::new(&cov).ok_or_else(|| Error::SingularHessian {
                theta: fmt_vec(&loc),
                detail: "covariance is not positive definite".into(),
            })?;
            let mass = peak + T::of(dim as f64) * half * T::ln_two_pi() + half * chol.log_det();
            partial.push((loc, cov, peak, chol, mass));
        }

        // Softmax of the Laplace masses.
        let masses: Vec<T> = partial.iter().map(|p| p.4).collect();
        let norm = log_sum_exp(&masses);
        let mut weighted: Vec<LaplaceMode<T>> = partial
            .into_iter()
            .map(|(loc, cov, peak, chol, mass)| LaplaceMode {
                location: loc,
                covariance: cov,
                peak_log_kernel: peak,
                weight: (mass - norm).exp(),
                chol,
            })
            .collect();

        // Prune negligible components and renormalise.
        weighted.retain(|m| m.weight >= weight_floor);
        if weighted.is_empty() {
            return Err(Error::Domain(
                "all mixture components fell below the weight floor".into(),
            ));
        }
        let total: T = weighted.iter().map(|m| m.weight).sum();
        for m in &mut weighted {
            m.weight = m.weight / total;
        }

        Ok(GaussianMixture {
            modes: weighted,
            dim,
        })
    }

    /// Single-component mixture with weight one.
    pub fn single(location: Vec<T>, covariance: Mat<T>, peak_log_kernel: T) -> Result<Self> {
        GaussianMixture::from_laplace_fits(
            vec![(location, covariance, peak_log_kernel)],
            T::zero(),
        )
    }

    /// A Gaussian prior viewed as a one-component mixture (sampling from it
    /// consumes exactly the draws `Prior::sample` would). Uniform priors have
    /// no Gaussian representation.
    pub fn from_prior(prior: &Prior<T>) -> Result<Self> {
        match prior {
            Prior::GaussianDiag { mean, var } => {
                GaussianMixture::single(mean.clone(), Mat::diag(var), T::zero())
            }
            Prior::UniformBox { .. } => Err(Error::Domain(
                "uniform prior cannot be represented as a Gaussian mixture".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[LaplaceMode<T>] {
        &self.modes
    }

    /// Normalised mixture log density.
    pub fn log_pdf(&self, theta: &[T]) -> T {
        let half = T::of(0.5);
        let d = T::of(self.dim as f64);
        let parts: Vec<T> = self
            .modes
            .iter()
            .map(|m| {
                let diff: Vec<T> = theta
                    .iter()
                    .zip(&m.location)
                    .map(|(&a, &b)| a - b)
                    .collect();
                m.weight.ln() - half * (d * T::ln_two_pi() + m.chol.log_det())
                    - half * m.chol.quad_form(&diff)
            })
            .collect();
        log_sum_exp(&parts)
    }

    /// One draw from the mixture.
    ///
    /// Invariant: a single-component mixture consumes exactly `dim` standard
    /// normal draws and no selector, so sampling it is draw-for-draw
    /// identical to sampling a diagonal Gaussian prior with the same moments.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let k = if self.modes.len() == 1 {
            0
        } else {
            let u = T::unit_uniform(rng);
            let mut acc = T::zero();
            let mut chosen = self.modes.len() - 1;
            for (i, m) in self.modes.iter().enumerate() {
                acc += m.weight;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let m = &self.modes[k];
        let z: Vec<T> = (0..self.dim).map(|_| T::standard_normal(rng)).collect();
        let lz = m.chol.lower_mul(&z);
        m.location
            .iter()
            .zip(&lz)
            .map(|(&mu, &v)| mu + v)
            .collect()
    }

    /// Weighted average mixture mean (diagnostic).
    pub fn mean(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for m in &self.modes {
            for j in 0..self.dim {
                out[j] += m.weight * m.location[j];
            }
        }
        out
    }
}

/// Fits one Gaussian per location from arbitrary kernel and curvature
/// callbacks. `neg_log_kernel` is the objective the modes minimise;
/// `hessian` must return an SPD curvature matrix at the location.
pub fn fit_laplace_mixture_with<T: Real>(
    neg_log_kernel: &mut dyn FnMut(&[T]) -> T,
    hessian: &mut dyn FnMut(&[T]) -> Result<Mat<T>>,
    locations: &[Vec<T>],
    weight_floor: T,
) -> Result<GaussianMixture<T>> {
    let mut fits = Vec::with_capacity(locations.len());
    for loc in locations {
        let h = hessian(loc)?;
        let chol = Cholesky::new(&h).ok_or_else(|| Error::SingularHessian {
            theta: fmt_vec(loc),
            detail: "curvature is not positive definite".into(),
        })?;
        let cov = chol.inverse();
        let peak = -neg_log_kernel(loc);
        fits.push((loc.clone(), cov, peak));
    }
    GaussianMixture::from_laplace_fits(fits, weight_floor)
}

/// Laplace mixture for a posterior problem at the given mode locations.
///
/// Curvature eigenvalues are floored at the weakest prior precision: a
/// direction the data leave flat reverts to prior scale instead of blowing
/// the component covariance up far past the support, which would make the
/// mixture useless as a surrogate and degenerate as a proposal.
pub fn fit_laplace_mixture<T: Real>(
    prob: &PosteriorProblem<'_, T>,
    view: &NoiseView<'_, T>,
    locations: &[Vec<T>],
    weight_floor: T,
) -> Result<GaussianMixture<T>> {
    let prior_precision = prob
        .prior
        .variance_diag()
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v))
        .recip();
    let mut nlk = |theta: &[T]| prob.neg_log_posterior(theta, view);
    let mut hess = |theta: &[T]| {
        prob.gauss_newton_hessian(theta, view)
            .map(|h| crate::linalg::clamp_eigenvalues(&h, prior_precision))
    };
    fit_laplace_mixture_with(&mut nlk, &mut hess, locations, weight_floor)
}
