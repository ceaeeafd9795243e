//! Bayesian nonparametric density estimation and clustering with mixtures
//! driven by normalized generalized-gamma random measures.
//!
//! The NGG(a, kappa, gamma) family covers the Dirichlet process (gamma = 0,
//! kappa = 1), the normalized inverse-Gaussian process (a = 1, gamma = 1/2)
//! and the normalized stable process (a = 1, kappa = 0) as special cases.
//! Inference runs a conditional Gibbs sampler over the latent measure itself:
//! the jumps of the random measure are materialized with a series
//! representation truncated at a relative-mass threshold, and a latent
//! auxiliary variable keeps every full conditional tractable.
//!
//! Module map:
//! - [`crm`] — NGG parameters, Laplace exponents, jump-series sampling
//! - [`mixture`] — observation kernels and base measures over their parameters
//! - [`gibbs`] — the conditional sampler and its configuration
//! - [`diagnostics`] — CPO, cluster-count posterior, density bands, ESS
//! - [`calibrate`] — matching a prior expected cluster count
//! - [`study`] — simulation harness against a kernel-density baseline
//! - [`exec`] — parallel/sequential replicate execution (feature `parallel`)

pub mod calibrate;
pub mod crm;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod gibbs;
pub mod mixture;
pub mod special;
pub mod study;

pub use calibrate::{calibrate, CalibrationResult, FreeParameter};
pub use crm::NggParams;
pub use diagnostics::{FitResult, FitSummary};
pub use error::{Error, Result};
pub use gibbs::{run_chain, GibbsConfig, ModelConfig};
pub use mixture::{BaseMeasure, KernelSpec, MuBase, MuHyperprior};
pub use study::{GaussianMixture, StudySpec};
