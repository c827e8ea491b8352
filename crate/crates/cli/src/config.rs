//! Run configuration: one TOML file, command-line flags layered on top, flags
//! win. Every field is validated before any compute is spent, and unknown
//! keys are rejected rather than ignored so a typo cannot silently run the
//! wrong experiment.

use std::path::PathBuf;
use std::str::FromStr;

use mmeig::benchmarks::linear_gaussian::linear_gaussian_experiment;
use mmeig::benchmarks::quadratic::quadratic_experiment;
use mmeig::benchmarks::sensors::{sensor4_experiment, sensor6_experiment};
use mmeig::{Experiment, Mat, NoiseModel, Scheme, SearchConfig};
use serde::Deserialize;

/// Raw file keys; everything optional so a file can set just what it needs.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub estimator: Option<String>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub mode_runs: Option<usize>,
    pub sigma_samples: Option<usize>,
    pub xi: Option<f64>,
    pub sigma2: Option<f64>,
    pub noise: Option<String>,
    pub sigma_lo: Option<f64>,
    pub sigma_hi: Option<f64>,
    pub tol: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    pub timing: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Flag values captured by the argument parser; `None` means "not given".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub estimator: Option<String>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub mode_runs: Option<usize>,
    pub sigma_samples: Option<usize>,
    pub xi: Option<f64>,
    pub sigma2: Option<f64>,
    pub noise: Option<String>,
    pub sigma_lo: Option<f64>,
    pub sigma_hi: Option<f64>,
    pub tol: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    pub timing: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Built-in model presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Quadratic,
    Sensor4,
    Sensor6,
    LinearGaussian,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Quadratic => "quadratic",
            ModelKind::Sensor4 => "sensor4",
            ModelKind::Sensor6 => "sensor6",
            ModelKind::LinearGaussian => "linear-gaussian",
        }
    }

    /// Canonical noise variance when the config does not override it.
    pub fn default_sigma2(&self) -> Option<f64> {
        match self {
            ModelKind::Quadratic => Some(4.0),
            // The sensor4 preset pins its physical noise level internally.
            ModelKind::Sensor4 => None,
            ModelKind::Sensor6 => Some(0.0256),
            ModelKind::LinearGaussian => Some(1.0),
        }
    }
}

impl FromStr for ModelKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "quadratic" => Ok(ModelKind::Quadratic),
            "sensor4" => Ok(ModelKind::Sensor4),
            "sensor6" => Ok(ModelKind::Sensor6),
            "linear-gaussian" => Ok(ModelKind::LinearGaussian),
            other => Err(invalid(
                "model",
                format!(
                    "unknown model `{other}`; valid names: {}",
                    mmeig::benchmarks::model_names().join(", ")
                ),
            )),
        }
    }
}

/// Noise treatment for the run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Calibrated,
    /// `sigma_e ~ U(lo, hi)`, marginalised over `sigma_samples` draws.
    Uncalibrated { lo: f64, hi: f64 },
}

/// A fully validated run description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: Scheme,
    pub outer: usize,
    pub inner: usize,
    pub mode_runs: usize,
    pub sigma_samples: usize,
    pub xi: f64,
    pub sigma2: Option<f64>,
    pub noise: NoiseKind,
    /// Pilot-based sample-size planning: `(tolerance, gamma)`.
    pub plan: Option<(f64, f64)>,
    pub seed: u64,
    /// 0 leaves the thread-pool size to the runtime.
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

impl RunConfig {
    /// Merges file and flags (flags win), then validates every field.
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<RunConfig, ConfigError> {
        let model_name = flags
            .model
            .or(file.model)
            .unwrap_or_else(|| "quadratic".to_string());
        let model: ModelKind = model_name.parse()?;

        let scheme_name = flags
            .estimator
            .or(file.estimator)
            .unwrap_or_else(|| "mnis".to_string());
        let scheme = Scheme::from_str(&scheme_name)
            .map_err(|e| invalid("estimator", e.to_string()))?;

        let outer = flags.outer.or(file.outer).unwrap_or(1000);
        if outer < 2 {
            return Err(invalid("outer", "need at least two outer samples"));
        }
        let inner = flags.inner.or(file.inner).unwrap_or(100);
        if scheme.has_inner_stage() && inner == 0 {
            return Err(invalid(
                "inner",
                format!("{scheme} runs an inner stage and needs inner >= 1"),
            ));
        }
        let mode_runs = flags.mode_runs.or(file.mode_runs).unwrap_or(20);
        if scheme != Scheme::Dlmc && mode_runs == 0 {
            return Err(invalid(
                "mode_runs",
                format!("{scheme} searches for modes and needs mode_runs >= 1"),
            ));
        }

        let xi_given = flags.xi.or(file.xi);
        if xi_given.is_some() && model != ModelKind::Quadratic {
            return Err(invalid(
                "xi",
                format!("{} takes no design scalar", model.name()),
            ));
        }
        let xi = xi_given.unwrap_or(1.0);
        if !xi.is_finite() {
            return Err(invalid("xi", "design scalar must be finite"));
        }

        let sigma2 = flags.sigma2.or(file.sigma2);
        if let Some(s2) = sigma2 {
            if model == ModelKind::Sensor4 {
                return Err(invalid(
                    "sigma2",
                    "sensor4 pins its noise level; sigma2 cannot be overridden",
                ));
            }
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(invalid("sigma2", "noise variance must be positive"));
            }
        }

        let noise_name = flags
            .noise
            .or(file.noise)
            .unwrap_or_else(|| "calibrated".to_string());
        let sigma_lo = flags.sigma_lo.or(file.sigma_lo);
        let sigma_hi = flags.sigma_hi.or(file.sigma_hi);
        let noise = match noise_name.as_str() {
            "calibrated" => {
                if sigma_lo.is_some() || sigma_hi.is_some() {
                    return Err(invalid(
                        "sigma_lo",
                        "sigma_lo/sigma_hi apply only to uncalibrated noise",
                    ));
                }
                NoiseKind::Calibrated
            }
            "uncalibrated" => {
                let (Some(lo), Some(hi)) = (sigma_lo, sigma_hi) else {
                    return Err(invalid(
                        "sigma_lo",
                        "uncalibrated noise needs sigma_lo and sigma_hi",
                    ));
                };
                if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                    return Err(invalid(
                        "sigma_lo",
                        "need 0 < sigma_lo <= sigma_hi for the sigma range",
                    ));
                }
                if scheme != Scheme::Mnis {
                    return Err(invalid(
                        "noise",
                        format!("uncalibrated noise is only estimated by mnis, not {scheme}"),
                    ));
                }
                NoiseKind::Uncalibrated { lo, hi }
            }
            other => {
                return Err(invalid(
                    "noise",
                    format!("unknown noise `{other}`; valid names: calibrated, uncalibrated"),
                ))
            }
        };

        let sigma_samples = flags.sigma_samples.or(file.sigma_samples).unwrap_or(100);
        if matches!(noise, NoiseKind::Uncalibrated { .. }) && sigma_samples == 0 {
            return Err(invalid(
                "sigma_samples",
                "uncalibrated noise needs at least one marginalisation draw",
            ));
        }

        let tol = flags.tol.or(file.tol);
        let gamma = flags.gamma.or(file.gamma);
        let plan = match (tol, gamma) {
            (None, None) => None,
            (Some(t), Some(g)) => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(invalid("tol", "tolerance must be positive"));
                }
                if !(g > 0.0 && g < 1.0) {
                    return Err(invalid("gamma", "gamma must lie in (0, 1)"));
                }
                Some((t, g))
            }
            _ => {
                return Err(invalid(
                    "tol",
                    "tol and gamma plan a run together; give both or neither",
                ))
            }
        };

        Ok(RunConfig {
            model,
            scheme,
            outer,
            inner,
            mode_runs,
            sigma_samples,
            xi,
            sigma2,
            noise,
            plan,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            workers: flags.workers.or(file.workers).unwrap_or(0),
            out: flags.out.or(file.out).map(PathBuf::from),
            timing: flags.timing || file.timing.unwrap_or(false),
        })
    }

    /// Builds the configured experiment, applying any noise override.
    pub fn build_experiment(&self) -> mmeig::Result<Experiment<f64>> {
        self.experiment_at(self.xi)
    }

    /// Same, at an explicit design point (sweeps move `xi`, nothing else).
    pub fn experiment_at(&self, xi: f64) -> mmeig::Result<Experiment<f64>> {
        let sigma2 = self.sigma2.or(self.model.default_sigma2());
        let mut exp = match self.model {
            ModelKind::Quadratic => quadratic_experiment(xi, sigma2.unwrap())?,
            ModelKind::Sensor4 => sensor4_experiment()?,
            ModelKind::Sensor6 => sensor6_experiment(sigma2.unwrap())?,
            ModelKind::LinearGaussian => linear_gaussian_experiment(
                Mat::identity(2),
                vec![1.0, 1.0],
                sigma2.unwrap(),
                1,
            )?,
        };
        if let NoiseKind::Uncalibrated { lo, hi } = self.noise {
            exp.noise = NoiseModel::uncalibrated(lo, hi, self.sigma_samples)?;
        }
        let _ = Arc::strong_count(&exp.model);
        Ok(exp)
    }

    /// Mode-search settings implied by the config.
    pub fn search_config(&self) -> SearchConfig<f64> {
        SearchConfig {
            starts: self.mode_runs,
            ..SearchConfig::default()
        }
    }
}
