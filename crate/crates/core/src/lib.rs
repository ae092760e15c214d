//! Full-batch Hamiltonian Monte Carlo for Bayesian neural networks.
//!
//! The crate provides fully-connected networks with analytic gradients,
//! factorized priors, tempered posteriors with deterministic sharded
//! evaluation, an HMC sampler, stochastic-gradient and variational baselines,
//! convergence diagnostics, predictive metrics, and posterior subspace scans.
//!
//! ```
//! use bnn_hmc::hmc::{run_chain, suggest_trajectory_length, HmcConfig};
//! use bnn_hmc::targets::IsotropicGaussian;
//!
//! let target = IsotropicGaussian { dim: 4, std: 1.0 };
//! let tau = suggest_trajectory_length(1.0);
//! let store = run_chain(&HmcConfig::new(tau, 0.05, 5, 20), &target, 0).unwrap();
//! assert_eq!(store.len(), 20);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluate;
pub mod hmc;
pub mod model;
pub mod posterior;
pub mod prior;
pub mod rng;
pub mod store;
pub mod subspace;
pub mod targets;

pub use error::{Error, Result};
pub use model::{Activation, Dataset, Head, ModelSpec, ParameterVector, Targets};
pub use posterior::{LogDensity, PosteriorSpec};
pub use prior::PriorSpec;
pub use store::SampleStore;
