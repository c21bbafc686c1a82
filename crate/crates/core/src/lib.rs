//! Stochastic-localization sampling via iterative posterior sampling (SLIPS).
//!
//! The sampler follows the observation process `Y_t = t X + sigma B_t` from a small
//! time `t0` up to `T`, estimating the denoiser `E[X | Y_t]` at each grid point with a
//! warm-started MALA chain, and returns `Y_T / T`.
//!
//! Modules:
//! - [`target`]: target distributions and Gaussian-mixture oracles.
//! - [`localization`]: grids, the discretization constant, posteriors and TV bounds.
//! - [`mcmc`]: MALA / ULA kernels and the denoiser estimator.
//! - [`sampler`]: initialization and the main loop, single runs and batches.
//! - [`metrics`]: sliced TV, mode weights, moment errors.
//! - [`verify`]: numerical checks of the localization identities and bounds.
//! - [`experiment`]: config files, result bundles and the command implementations.

pub mod error;
pub mod experiment;
pub mod localization;
pub mod mcmc;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod target;
pub mod verify;

pub use error::{Result, SlipsError};
pub use localization::{Discretization, GridKind, TvBoundInputs, TvBoundReport};
pub use mcmc::{DenoiserEstimate, MalaSettings, MalaState};
pub use metrics::{MetricKind, MetricRecord, Samples};
pub use sampler::{DenoiserMode, RunResult, SigmaSpec, SlipsConfig};
pub use stats::Estimate;
pub use target::{DenoiserOracle, ExactSampler, GaussianMixture, TargetModel};
pub use verify::CheckReport;
