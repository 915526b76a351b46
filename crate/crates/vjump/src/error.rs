//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, simulation, likelihood evaluation,
/// inference and selection.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vector has length {got}, template has {want} free parameters")]
    LengthMismatch { want: usize, got: usize },

    #[error("network probability P[{row}][{col}] = {value} is outside [0, 1]")]
    InvalidProbability { row: usize, col: usize, value: f64 },

    #[error("row {row} of the network matrix sums to {sum:?}, expected 1 within 1e-12")]
    RowSumMismatch { row: usize, sum: f64 },

    #[error("switching rate for state {state} must be positive, got {value}")]
    InvalidRate { state: usize, value: f64 },

    #[error("noise standard deviation must be nonnegative, got {0}")]
    InvalidSigma(f64),

    #[error("observation interval must be positive, got {0}")]
    InvalidDeltaT(f64),

    #[error("invalid model template: {0}")]
    Template(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("state network has no unique stationary distribution")]
    ReducibleChain,

    #[error("path of duration {duration} is too short for {count} observations spaced {delta_t}")]
    PathTooShort {
        duration: f64,
        count: usize,
        delta_t: f64,
    },

    #[error("density evaluation requires positive measurement noise")]
    ZeroNoise,

    #[error("track likelihood requires correlated increments from a single track")]
    UncorrelatedSeries,

    #[error("empty increment series")]
    EmptySeries,

    #[error("increment series observation intervals differ: {0} vs {1}")]
    MixedDeltaT(f64, f64),

    #[error("chain start is outside the prior support or has a degenerate likelihood")]
    InvalidStart,

    #[error("proposal covariance is singular even after regularisation")]
    SingularCovariance,

    #[error("chains have mismatched shapes or fewer than 2 chains of length >= 10")]
    ShapeMismatch,

    #[error("non-finite value where a finite one is required: {0}")]
    NonFinite(f64),

    #[error("division by zero: reference noise standard deviation is 0")]
    DivisionByZero,

    #[error("selection candidates disagree on the data count N")]
    MismatchedN,

    #[error("need at least {want} inputs, got {got}")]
    NotEnoughInputs { want: usize, got: usize },

    #[error("particle filter needs at least 2 particles, got {0}")]
    TooFewParticles(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("observation times are not uniformly spaced: {0}")]
    NonUniformSpacing(String),

    #[error("cannot read data from {path}: {reason}")]
    UnreadableData { path: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
