//! Error type shared by the whole crate. Estimators report failure through
//! these variants instead of panicking; numerical edge cases that have a
//! defined value (underflow, out-of-support samples) are not errors.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or running an estimator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("domain error: {0}")]
    Domain(String),

    /// The forward model returned NaN or infinity.
    #[error("forward model produced a non-finite output at theta = {theta}")]
    NonFiniteModel { theta: String },

    /// A curvature matrix had no usable positive part.
    #[error("singular Hessian at theta = {theta}: {detail}")]
    SingularHessian { theta: String, detail: String },

    /// An optimizer start had an infinite objective (outside the support).
    #[error("start rejected: objective not finite at {start}")]
    StartRejected { start: String },

    /// No multistart run converged.
    #[error("mode search failed: 0 of {attempted} runs converged")]
    SearchFailed { attempted: usize },

    /// Too many outer samples had to be dropped for the estimate to be trusted.
    #[error("estimator skipped {skipped} of {total} outer samples (more than {limit_percent}%)")]
    TooManySkips {
        skipped: usize,
        total: usize,
        limit_percent: u32,
    },

    /// A pilot run carried no usable variance information.
    #[error("degenerate pilot estimate: {0}")]
    DegeneratePilot(String),

    /// Estimator name not recognised.
    #[error("unknown estimator `{name}` (expected one of: {valid})")]
    UnknownScheme { name: String, valid: String },
}

/// Formats a parameter vector for error messages.
pub(crate) fn fmt_vec<T: std::fmt::Display>(v: &[T]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}
