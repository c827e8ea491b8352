//! Small numeric kernels: stabilised log-sum-exp, the standard normal
//! quantile, finite differences, and running moments. Everything downstream
//! assumes these never overflow for finite input.

use crate::real::Real;

/// `log(sum_i exp(x_i))` computed against the running maximum.
///
/// `-inf` entries drop out; an empty or all-`-inf` slice yields `-inf`;
/// a `+inf` entry dominates; NaN propagates.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let mut hi = T::neg_infinity();
    for &x in xs {
        if x.is_nan() {
            return x;
        }
        if x > hi {
            hi = x;
        }
    }
    if hi.is_infinite() {
        // Either all entries are -inf or at least one is +inf.
        return hi;
    }
    let mut acc = T::zero();
    for &x in xs {
        acc += (x - hi).exp();
    }
    hi + acc.ln()
}

/// `log(mean_i exp(x_i))`; `-inf` for an empty slice.
pub fn log_mean_exp<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::neg_infinity();
    }
    log_sum_exp(xs) - T::of(xs.len() as f64).ln()
}

/// Standard normal quantile `Phi^{-1}(p)` for `0 < p < 1`.
///
/// Acklam's rational approximation refined by one Halley step against the
/// complementary error function; absolute error is far below `1e-9` in `f64`.
pub fn normal_quantile<T: Real>(p: T) -> T {
    assert!(
        p > T::zero() && p < T::one(),
        "normal_quantile requires 0 < p < 1"
    );
    // Work in f64 internally: the coefficients only exist at that precision.
    let pf = p.to_f64().expect("probability converts to f64");
    T::of(normal_quantile_f64(pf))
}

fn normal_quantile_f64(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley refinement: e = Phi(x) - p, with Phi from erfc.
    let e = 0.5 * erfc_f64(-x / core::f64::consts::SQRT_2) - p;
    let u = e * (core::f64::consts::TAU).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Complementary error function (Numerical Recipes Chebyshev fit, |err| < 1.2e-7
/// before the quantile's Halley step tightens the composition).
fn erfc_f64(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_f64(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// `erf(x) = (2/sqrt(pi)) sum (-1)^n x^(2n+1) / (n! (2n+1))`; converges to
/// machine precision for `|x| < 2` well before the iteration cap.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 1.0f64;
    while n < 200.0 {
        term *= -x2 / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
        n += 1.0;
    }
    sum * 2.0 / core::f64::consts::PI.sqrt()
}

/// `sqrt(pi) exp(x^2) erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`
/// evaluated with the modified Lentz scheme; rapid for `x >= 2`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = TINY;
    let mut d = 0.0f64;
    let mut n = 1u32;
    while n < 300 {
        let a = if n == 1 { 1.0 } else { (f64::from(n) - 1.0) / 2.0 };
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
        n += 1;
    }
    (-x * x).exp() / core::f64::consts::PI.sqrt() * f
}

/// Central-difference gradient with per-coordinate step `h * max(1, |x_j|)`.
pub fn central_gradient<T: Real>(f: &mut dyn FnMut(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut g = vec![T::zero(); x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let step = h * T::one().max(x[j].abs());
        probe[j] = x[j] + step;
        let fp = f(&probe);
        probe[j] = x[j] - step;
        let fm = f(&probe);
        probe[j] = x[j];
        g[j] = (fp - fm) / (step + step);
    }
    g
}

/// Sample mean and standard deviation (n-1 denominator) via Welford's update.
///
/// Returns `(mean, std)`; `std` is zero when fewer than two values are given.
pub fn mean_and_std<T: Real>(xs: &[T]) -> (T, T) {
    let mut mean = T::zero();
    let mut m2 = T::zero();
    let mut n = T::zero();
    for &x in xs {
        n += T::one();
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if xs.len() < 2 {
        (mean, T::zero())
    } else {
        (mean, (m2 / (n - T::one())).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log_sum_exp_matches_direct_sum_in_safe_range() {
        let xs = [0.3_f64, -1.2, 2.0, 0.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_extreme_magnitudes() {
        let xs = [-1e4_f64, -1e4 + 1.0];
        let got = log_sum_exp(&xs);
        // exp would underflow; the stabilised form must not.
        assert!((got - (-1e4 + 1.0 + (1.0f64).exp().recip().ln_1p())).abs() < 1e-10);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[1.0, f64::NEG_INFINITY]), 1.0);
    }

    #[test]
    fn log_mean_exp_of_constant_is_constant() {
        let xs = [3.5_f64; 17];
        assert!((log_mean_exp(&xs) - 3.5).abs() < 1e-13);
    }

    #[test]
    fn normal_quantile_hits_reference_points() {
        // Reference values from the standard normal distribution.
        let cases = [
            (0.5f64, 0.0),
            (0.975, 1.959963984540054),
            (0.84134474606854293, 1.0),
            (0.025, -1.959963984540054),
            (0.999, 3.090232306167813),
            (1e-10, -6.361340902404056),
        ];
        for (p, z) in cases {
            assert!(
                (normal_quantile(p) - z).abs() < 1e-8,
                "quantile({p}) = {} want {z}",
                normal_quantile(p)
            );
        }
    }

    #[test]
    fn central_gradient_is_exact_on_quadratics_up_to_step_error() {
        let mut f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = central_gradient(&mut f, &[2.0, -1.0], 1e-6);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn mean_and_std_match_two_pass_formulas() {
        let xs = [1.0_f64, 2.0, 4.0, 8.0];
        let (m, s) = mean_and_std(&xs);
        assert!((m - 3.75).abs() < 1e-14);
        let var: f64 = xs.iter().map(|x| (x - 3.75).powi(2)).sum::<f64>() / 3.0;
        assert!((s - var.sqrt()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn log_sum_exp_shift_invariant(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let lhs = log_sum_exp(&shifted);
            let rhs = log_sum_exp(&xs) + shift;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn normal_quantile_is_symmetric(p in 1e-9f64..0.5) {
            prop_assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-7);
        }
    }
}
