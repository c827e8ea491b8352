//! Benchmark problems and their independent oracles: the sign-symmetric
//! quadratic model, two sensor-localisation networks, a conjugate
//! linear-Gaussian family with closed-form EIG, a one-dimensional
//! Gaussian-mixture KL quadrature, and subset search over measurement
//! components.

pub mod gm1d;
pub mod linear_gaussian;
pub mod quadratic;
pub mod sensors;
pub mod subsets;

pub use gm1d::gm1d_kl_quadrature;
pub use linear_gaussian::{
    linear_gaussian_eig, linear_gaussian_experiment, linear_gaussian_posterior, LinearModel,
};
pub use quadratic::{quadratic_experiment, quadratic_mode_oracle, QuadraticModel};
pub use sensors::{
    sensor4_experiment, sensor6_experiment, sensor6_full_pairs, sensor6_with_pairs, SensorNetwork,
};
pub use subsets::{best_design_search, EvaluatedDesign, SubsetSearchConfig, SubsetSearchResult};

/// Built-in model names understood by the command-line harness.
pub fn model_names() -> [&'static str; 4] {
    ["quadratic", "sensor4", "sensor6", "linear-gaussian"]
}
