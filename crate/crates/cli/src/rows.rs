//! Result rows and their CSV serialisation. The header is a stable contract:
//! downstream tooling parses columns by name, and a fixed `(config, seed)`
//! must reproduce the output byte for byte at any worker count, so every
//! formatting choice here is deterministic.

use std::fmt::Write as _;

use mmeig::EigEstimate;

/// Column names in emission order.
pub const CSV_HEADER: &str = "run_id,estimator,model,design,outer,inner,mode_runs,eig,std_error,\
     likelihood_evals,optimizer_runs,wall_time_s,underflow_count,skipped_samples";

/// One completed estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    /// Sequential identifier within one invocation: `r0001`, `r0002`, ...
    pub run_id: String,
    pub estimator: String,
    pub model: String,
    /// Design descriptor; commas are rewritten so the field never needs
    /// quoting.
    pub design: String,
    pub outer: usize,
    pub inner: usize,
    pub mode_runs: usize,
    pub eig: f64,
    pub std_error: f64,
    pub likelihood_evals: u64,
    pub optimizer_runs: u64,
    /// Zero unless timing was requested; real wall time is the one field
    /// that would otherwise break byte-identical reruns.
    pub wall_time_s: f64,
    pub underflow_count: u64,
    pub skipped_samples: usize,
}

impl ResultRow {
    pub fn from_estimate(
        run_id: usize,
        model: &str,
        design: &str,
        est: &EigEstimate<f64>,
        wall_time_s: f64,
    ) -> Self {
        ResultRow {
            run_id: format!("r{run_id:04}"),
            estimator: est.scheme.name().to_string(),
            model: model.to_string(),
            design: design.replace(',', ";"),
            outer: est.outer_samples,
            inner: est.inner_samples,
            mode_runs: est.mode_search_runs,
            eig: est.value,
            std_error: est.std_error,
            likelihood_evals: est.likelihood_evals,
            optimizer_runs: est.optimizer_runs,
            wall_time_s,
            underflow_count: est.underflow_count,
            skipped_samples: est.skipped_samples,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{}",
            self.run_id,
            self.estimator,
            self.model,
            self.design,
            self.outer,
            self.inner,
            self.mode_runs,
            format_value(self.eig),
            format_value(self.std_error),
            self.likelihood_evals,
            self.optimizer_runs,
            self.wall_time_s,
            self.underflow_count,
            self.skipped_samples
        )
        .expect("writing to a String cannot fail");
        line
    }
}

/// Shortest round-trip decimal for a float; `{}` on `f64` is exact and
/// deterministic, which is what the byte-identity contract needs.
fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Renders the header plus one line per row, trailing newline included.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}
