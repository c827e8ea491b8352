//! Linear-Gaussian benchmark: `g(theta) = A theta` with a zero-mean Gaussian
//! prior of diagonal covariance `S0` and calibrated noise `sigma2`.
//!
//! Conjugacy gives closed forms for everything an estimator produces, which
//! makes this the calibration target for the whole stack:
//!
//! ```text
//! EIG = (1/2) log det(I + (m / sigma2) S0 A^T A)
//! ```
//!
//! independent of the observed data, and the posterior after `m` replicate
//! observations is Gaussian with precision `m A^T A / sigma2 + S0^{-1}`.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Cholesky, Mat};
use crate::model::{Experiment, ForwardModel, NoiseModel, ObservationSet, Prior};
use crate::real::Real;

use std::sync::Arc;

/// Forward model that multiplies the parameter by a fixed matrix.
pub struct LinearModel<T: Real> {
    a: Mat<T>,
}

impl<T: Real> ForwardModel<T> for LinearModel<T> {
    fn param_dim(&self) -> usize {
        self.a.cols()
    }

    fn obs_dim(&self) -> usize {
        self.a.rows()
    }

    fn evaluate(&self, theta: &[T], _xi: &[T]) -> Vec<T> {
        self.a.matvec(theta)
    }

    fn jacobian(&self, _theta: &[T], _xi: &[T]) -> Option<Mat<T>> {
        Some(self.a.clone())
    }

    fn name(&self) -> &str {
        "linear-gaussian"
    }
}

fn check_dims<T: Real>(a: &Mat<T>, prior_var: &[T], sigma2: T) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Domain("design matrix must be non-empty".into()));
    }
    if prior_var.len() != a.cols() {
        return Err(Error::Domain(format!(
            "prior has {} variances but the design matrix has {} columns",
            prior_var.len(),
            a.cols()
        )));
    }
    if sigma2 <= T::zero() {
        return Err(Error::Domain("noise variance must be positive".into()));
    }
    Ok(())
}

/// Builds the linear-Gaussian benchmark with `replicates` independent
/// observations per evaluation of the design.
pub fn linear_gaussian_experiment<T: Real>(
    a: Mat<T>,
    prior_var: Vec<T>,
    sigma2: T,
    replicates: usize,
) -> Result<Experiment<T>> {
    check_dims(&a, &prior_var, sigma2)?;
    let dim = prior_var.len();
    let label = format!("a={}x{}", a.rows(), a.cols());
    Experiment::new(
        Arc::new(LinearModel { a }),
        Prior::gaussian(vec![T::zero(); dim], prior_var)?,
        NoiseModel::calibrated(sigma2)?,
        vec![T::zero()],
        replicates,
        label,
    )
}

/// Closed-form expected information gain of the linear-Gaussian experiment.
///
/// Refuses rank-deficient design matrices: with a flat direction the Gaussian
/// algebra still goes through, but the benchmark is meant to pin down every
/// estimator path and a non-identifiable design would silently test less than
/// it claims to.
pub fn linear_gaussian_eig<T: Real>(
    a: &Mat<T>,
    prior_var: &[T],
    sigma2: T,
    replicates: usize,
) -> Result<T> {
    check_dims(a, prior_var, sigma2)?;
    let gram = a.gram();
    let (evals, _) = sym_eigen(&gram);
    let lambda_max = *evals.last().expect("non-empty spectrum");
    let lambda_min = evals[0];
    if lambda_min <= T::of(1e-12) * lambda_max || lambda_max <= T::zero() {
        return Err(Error::Domain(
            "design matrix is rank deficient; the closed-form benchmark requires full column rank"
                .into(),
        ));
    }
    let d = a.cols();
    let scale = T::from_usize(replicates.max(1)).unwrap() / sigma2;
    // det(I + c S0 G) = det(I + c S0^{1/2} G S0^{1/2}); the symmetric form
    // keeps the Cholesky applicable.
    let mut sym = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let s = (prior_var[i] * prior_var[j]).sqrt();
            let v = if i == j { T::one() } else { T::zero() };
            sym.set(i, j, v + scale * s * gram.at(i, j));
        }
    }
    let chol = Cholesky::new(&sym).ok_or_else(|| {
        Error::Domain("information matrix is not positive definite".into())
    })?;
    Ok(chol.log_det() / T::of(2.0))
}

/// Exact Gaussian posterior (mean, covariance) given observed data.
pub fn linear_gaussian_posterior<T: Real>(
    a: &Mat<T>,
    prior_var: &[T],
    sigma2: T,
    data: &ObservationSet<T>,
) -> Result<(Vec<T>, Mat<T>)> {
    check_dims(a, prior_var, sigma2)?;
    if data.obs_dim() != a.rows() {
        return Err(Error::Domain(format!(
            "data rows have length {} but the model produces {}",
            data.obs_dim(),
            a.rows()
        )));
    }
    let d = a.cols();
    let m = T::from_usize(data.replicates()).unwrap();
    let mut precision = a.gram();
    precision.scale_in_place(m / sigma2);
    for j in 0..d {
        let p = precision.at(j, j) + T::one() / prior_var[j];
        precision.set(j, j, p);
    }
    let chol = Cholesky::new(&precision)
        .ok_or_else(|| Error::Domain("posterior precision is not positive definite".into()))?;
    let ybar = data.mean_row();
    let at = a.transpose();
    let mut rhs = at.matvec(&ybar);
    for r in rhs.iter_mut() {
        *r = *r * m / sigma2;
    }
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    Ok((mean, cov))
}

#[allow(clippy::excessive_precision)]
#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = 0.6931471805599453;

    #[test]
    fn identity_design_in_two_dimensions_gives_log_two() {
        let eig = linear_gaussian_eig(&Mat::identity(2), &[1.0, 1.0], 1.0, 1).unwrap();
        assert!((eig - LN_2).abs() < 1e-12);
    }

    #[test]
    fn scalar_design_gives_half_log_two() {
        let eig = linear_gaussian_eig(&Mat::identity(1), &[1.0], 1.0, 1).unwrap();
        assert!((eig - 0.5 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn replicates_enter_through_the_information_scale() {
        let eig = linear_gaussian_eig(&Mat::identity(1), &[1.0], 1.0, 4).unwrap();
        assert!((eig - 0.5 * 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_refused() {
        let a = Mat::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(linear_gaussian_eig(&a, &[1.0, 1.0], 1.0, 1).is_err());
    }

    #[test]
    fn mismatched_prior_length_is_refused() {
        assert!(linear_gaussian_eig(&Mat::identity(2), &[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn posterior_matches_the_scalar_conjugate_formula() {
        // One scalar observation y with prior N(0, v): the posterior is
        // N(y v / (v + s2), v s2 / (v + s2)).
        let a = Mat::identity(1);
        let (v, s2, y) = (2.0f64, 0.5, 1.7);
        let data = ObservationSet::new(Mat::from_rows(&[&[y]]));
        let (mean, cov) = linear_gaussian_posterior(&a, &[v], s2, &data).unwrap();
        assert!((mean[0] - y * v / (v + s2)).abs() < 1e-12);
        assert!((cov.at(0, 0) - v * s2 / (v + s2)).abs() < 1e-12);
    }

    #[test]
    fn posterior_precision_accumulates_over_replicates() {
        let a = Mat::identity(1);
        let rows: Vec<&[f64]> = vec![&[1.0], &[2.0], &[3.0]];
        let data = ObservationSet::new(Mat::from_rows(&rows));
        let (mean, cov) = linear_gaussian_posterior(&a, &[1.0], 1.0, &data).unwrap();
        // Precision 3 + 1, mean pulled 3/4 of the way to ybar = 2.
        assert!((cov.at(0, 0) - 0.25).abs() < 1e-12);
        assert!((mean[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn experiment_wires_the_matrix_into_the_forward_model() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let exp = linear_gaussian_experiment(a, vec![1.0, 1.0], 1.0, 1).unwrap();
        let g = exp.model.evaluate(&[1.0, 1.0], &exp.design);
        assert_eq!(g, vec![3.0, 1.0]);
    }
}
