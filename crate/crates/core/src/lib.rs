//! Bayesian reconstruction of weighted networks from node dynamics.
//!
//! The crate samples the full posterior over sparse weighted graphs given
//! observed node states, using Metropolis-Hastings with entry proposals
//! focused on an estimated typical edge set, "nearby" proposals, self-adaptive
//! bisection/interpolation weight proposals, and a quantized-weight
//! description-length prior coupled to a degree-corrected block model.
//!
//! Main entry points:
//!
//! - [`graph::WeightedGraph`]: sparse symmetric weights plus node parameters.
//! - [`models`]: kinetic/equilibrium Ising and Gaussian pseudolikelihoods, simulators.
//! - [`prior`]: the quantized weight prior and the block-model placement prior.
//! - [`sampler`]: greedy MAP, typical edge set and the MCMC chain.
//! - [`estimators`]: marginals, MP estimate, autocorrelation, correlation baselines.
//! - [`synthetic`]: planted networks and the factorized benchmark target.
//! - [`io`] and [`pipeline`]: file formats and the commands of the `netrecon` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod alias;
pub mod bli;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod io;
pub mod math;
pub mod models;
pub mod pipeline;
pub mod prior;
pub mod sampler;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::{Dichotomization, WeightedGraph};
pub use models::{Dataset, DatasetKind, ModelKind};
