//! Quadrature oracle for the KL divergence of a one-dimensional Gaussian
//! mixture from a uniform prior: `KL(q || p) = int q(x) log(q(x)/p(x)) dx`
//! with `p = 1/(hi - lo)` on the prior interval.
//!
//! This deliberately shares no code with the analytic mixture formula it
//! cross-checks: the integrand is evaluated pointwise and integrated with
//! adaptive Simpson refinement. The mixture is treated as untruncated, and
//! the integration domain is widened to cover every component out to
//! `8.5` standard deviations, so components near the interval edge keep
//! their tails.

use crate::error::{Error, Result};
use crate::real::Real;

const TAIL_SIGMAS: f64 = 8.5;
const MAX_DEPTH: u32 = 48;

struct Mixture1d<T> {
    weights: Vec<T>,
    means: Vec<T>,
    vars: Vec<T>,
}

impl<T: Real> Mixture1d<T> {
    fn density(&self, x: T) -> T {
        let mut q = T::zero();
        for k in 0..self.weights.len() {
            let z = x - self.means[k];
            let e = -(z * z) / (T::of(2.0) * self.vars[k]);
            q = q + self.weights[k] * e.exp() / (T::ln_two_pi().exp() * self.vars[k]).sqrt();
        }
        q
    }
}

/// `q log(q / p)` with the convention `0 log 0 = 0`.
fn integrand<T: Real>(mix: &Mixture1d<T>, log_p: T, x: T) -> T {
    let q = mix.density(x);
    if q <= T::zero() {
        T::zero()
    } else {
        q * (q.ln() - log_p)
    }
}

fn simpson<T: Real>(fa: T, fm: T, fb: T, h: T) -> T {
    h / T::of(6.0) * (fa + T::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let m = (a + b) / T::of(2.0);
    let lm = (a + m) / T::of(2.0);
    let rm = (m + b) / T::of(2.0);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= T::of(15.0) * tol {
        left + right + delta / T::of(15.0)
    } else {
        let half = tol / T::of(2.0);
        adaptive(f, a, m, fa, flm, fm, left, half, depth + 1)
            + adaptive(f, m, b, fm, frm, fb, right, half, depth + 1)
    }
}

fn integrate_segment<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    if b <= a {
        return T::zero();
    }
    let m = (a + b) / T::of(2.0);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Numerically integrates the KL divergence of the mixture from the uniform
/// density on `interval`. Every component mean must lie inside the interval;
/// weights must be non-negative and sum to one.
pub fn gm1d_kl_quadrature<T: Real>(
    weights: &[T],
    means: &[T],
    vars: &[T],
    interval: (T, T),
) -> Result<T> {
    let k = weights.len();
    if k == 0 || means.len() != k || vars.len() != k {
        return Err(Error::Domain(
            "weights, means, and variances must have equal non-zero length".into(),
        ));
    }
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(Error::Domain("prior interval must satisfy lo < hi".into()));
    }
    let mut total = T::zero();
    for i in 0..k {
        if weights[i] < T::zero() || !weights[i].is_finite() {
            return Err(Error::Domain("mixture weights must be non-negative".into()));
        }
        if vars[i] <= T::zero() {
            return Err(Error::Domain("mixture variances must be positive".into()));
        }
        if means[i] < lo || means[i] > hi {
            return Err(Error::Domain(format!(
                "component mean {} lies outside the prior interval",
                means[i]
            )));
        }
        total += weights[i];
    }
    if (total - T::one()).abs() > T::of(1e-9) {
        return Err(Error::Domain("mixture weights must sum to one".into()));
    }

    let mix = Mixture1d {
        weights: weights.to_vec(),
        means: means.to_vec(),
        vars: vars.to_vec(),
    };
    let log_p = -(hi - lo).ln();
    let f = |x: T| integrand(&mix, log_p, x);

    // Breakpoints at the interval edges and at every component's center,
    // one-sigma, and far-tail marks keep each Simpson cell smooth.
    let mut points: Vec<T> = vec![lo, hi];
    let tail = T::of(TAIL_SIGMAS);
    for i in 0..k {
        let sd = vars[i].sqrt();
        for off in [-tail, -T::one(), T::zero(), T::one(), tail] {
            points.push(means[i] + off * sd);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    points.dedup_by(|a, b| *a == *b);

    let tol = T::of(1e-10);
    let mut kl = T::zero();
    for w in points.windows(2) {
        kl = kl + integrate_segment(&f, w[0], w[1], tol);
    }
    Ok(kl)
}

#[allow(clippy::excessive_precision)]
#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form KL for well-separated components: overlap terms vanish and
    /// each component contributes its own entropy.
    fn separated_formula(weights: &[f64], vars: &[f64], width: f64) -> f64 {
        let two_pi = std::f64::consts::TAU;
        let mut kl = width.ln() - 0.5 * two_pi.ln() - 0.5;
        for (w, v) in weights.iter().zip(vars.iter()) {
            kl += w * (w.ln() - 0.5 * v.ln());
        }
        kl
    }

    #[test]
    fn single_gaussian_against_uniform_matches_the_frozen_value() {
        let kl: f64 = gm1d_kl_quadrature(&[1.0], &[2.0], &[0.5], (0.0, 10.0)).unwrap();
        assert!((kl - 1.2302201501).abs() < 1e-6, "kl = {kl}");
    }

    #[test]
    fn well_separated_mixture_matches_the_entropy_formula() {
        let w = [0.3, 0.3, 0.4];
        let v = [0.005, 0.002, 0.005];
        let kl = gm1d_kl_quadrature(&w, &[2.0, 5.0, 7.0], &v, (0.0, 10.0)).unwrap();
        let want = separated_formula(&w, &v, 10.0);
        assert!((kl - want).abs() < 1e-6, "kl = {kl}, want {want}");
        assert!((want - 2.5813488775).abs() < 1e-7);
    }

    #[test]
    fn moderate_overlap_lands_between_the_convexity_bounds() {
        let w = [0.3, 0.3, 0.4];
        let v = [0.5, 0.2, 0.5];
        let kl = gm1d_kl_quadrature(&w, &[2.0, 5.0, 7.0], &v, (0.0, 10.0)).unwrap();
        // Overlap lowers the mixture entropy, so the KL exceeds the
        // well-separated value; convexity in the first argument caps it by
        // the weight-averaged per-component divergences.
        let separated = separated_formula(&w, &v, 10.0);
        let two_pi_e = std::f64::consts::TAU * std::f64::consts::E;
        let upper: f64 = w
            .iter()
            .zip(v.iter())
            .map(|(wi, vi)| wi * (10f64.ln() - 0.5 * (two_pi_e * vi).ln()))
            .sum();
        assert!(kl >= separated - 1e-9, "kl = {kl} < separated {separated}");
        assert!(kl <= upper + 1e-9, "kl = {kl} > upper {upper}");
    }

    #[test]
    fn translation_of_means_and_interval_leaves_the_divergence_unchanged() {
        let a: f64 =
            gm1d_kl_quadrature(&[0.5, 0.5], &[3.0, 6.0], &[0.3, 0.4], (0.0, 10.0)).unwrap();
        let b =
            gm1d_kl_quadrature(&[0.5, 0.5], &[8.0, 11.0], &[0.3, 0.4], (5.0, 15.0)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn component_mean_outside_the_interval_is_refused() {
        assert!(gm1d_kl_quadrature(&[1.0], &[12.0], &[0.5], (0.0, 10.0)).is_err());
    }

    #[test]
    fn unnormalized_weights_are_refused() {
        assert!(gm1d_kl_quadrature(&[0.7, 0.7], &[2.0, 5.0], &[0.5, 0.5], (0.0, 10.0)).is_err());
    }

    #[test]
    fn degenerate_interval_is_refused() {
        assert!(gm1d_kl_quadrature(&[1.0], &[0.0], &[1.0], (3.0, 3.0)).is_err());
    }
}
