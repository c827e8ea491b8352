//! Expected-information-gain estimation for Bayesian experimental design
//! with multimodal posteriors.
//!
//! Data follow `y_i = g(theta, xi) + eps_i` with `eps ~ N(0, sigma_e^2 I)`.
//! The expected information gain (EIG) of a design `xi` is the prior-predictive
//! average of `KL(posterior || prior)`. This crate implements the nested
//! Monte Carlo baseline (`eig_dlmc`), Laplace-based estimators (`eig_la`,
//! `eig_mla`), and nested importance sampling driven by a multimodal Laplace
//! proposal (`eig_mnis`, `eig_lais`, `eig_mnis_uncalibrated`), together with
//! the multistart mode atlas, cost/sample-size planning, and the benchmark
//! problems and oracles used to validate them.
//!
//! All numeric kernels are generic over the scalar type via [`Real`]
//! (`f32`/`f64`); `f64` aliases for the main types live at the crate root.

pub mod benchmarks;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod math;
pub mod mixture;
pub mod model;
pub mod modes;
pub mod optimize;
pub mod posterior;
pub mod real;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{
    analytic_kl_mixture, cost_model, eig_dlmc, eig_la, eig_lais, eig_mla, eig_mnis,
    eig_mnis_uncalibrated, eig_nis_with_proposal, estimate_sample_sizes, CostReport, EigEstimate,
    LaplaceOptions, PriorProposal, ProposalBuilder, SampleBudget, Scheme,
};
pub use linalg::{Cholesky, Mat};
pub use mixture::{fit_laplace_mixture, GaussianMixture, LaplaceMode};
pub use model::{
    simulate_observations, Experiment, ForwardModel, NoiseModel, ObservationSet, Prior,
};
pub use modes::{
    latin_hypercube_starts, multistart_mode_search, required_runs, ModeCandidate,
    ModeSearchOutcome,
};
pub use optimize::{find_map, minimize, MapResult, OptimizerKind, SearchConfig};
pub use posterior::{NoiseView, PosteriorProblem};
pub use real::Real;

/// `f64` instantiations of the core types.
pub type Mat64 = Mat<f64>;
pub type Prior64 = Prior<f64>;
pub type Experiment64 = Experiment<f64>;
pub type GaussianMixture64 = GaussianMixture<f64>;
pub type SearchConfig64 = SearchConfig<f64>;
pub type EigEstimate64 = EigEstimate<f64>;
