//! Calibration of and selection between n-state stochastic velocity-jump
//! models from discrete-time, noise-corrupted single-agent tracks.
//!
//! The crate provides:
//!
//! * exact simulation of the velocity-jump process and of noisy tracks
//!   ([`simulate`]);
//! * approximate increment densities (up to one or two state switches per
//!   observation interval) and the hidden-state track likelihood
//!   ([`likelihood`]);
//! * adaptive Metropolis-Hastings MCMC with multi-chain convergence
//!   diagnostics ([`mcmc`], [`diagnostics`]);
//! * AIC/BIC model selection with a noise-inflation diagnostic
//!   ([`selection`]);
//! * a bootstrap particle filter baseline for validating the approximate
//!   likelihood ([`pf`]);
//! * experiment configuration and CSV/summary I/O ([`config`], [`io`]).

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod model;
pub mod pf;
pub mod quad;
pub mod rng;
pub mod selection;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{IncrementKernel, LikelihoodMode};
pub use model::{ModelTemplate, ProbEntry, UniformPrior, ValueSpec, VelocityJumpModel};
pub use simulate::{ExactPath, IncrementSeries, Track};
