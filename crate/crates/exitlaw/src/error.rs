//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, sampling, solving, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// A generator matrix failed validation.
    #[error("invalid generator matrix: {0}")]
    InvalidGenerator(#[from] crate::process::GeneratorViolation),

    /// A rate function was queried outside its domain.
    #[error("rate function has no value at {query}: {reason}")]
    RateOutOfDomain { query: String, reason: String },

    /// A rate function failed validation (negative rate, bad breakpoints).
    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    /// Interval bounds for a rate bound were not 0 <= a < b < inf.
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    /// The killing mechanism cannot fire almost surely from the given start.
    #[error("killing not almost sure: {0}")]
    KillingNotAlmostSure(String),

    /// A rebirth measure failed validation.
    #[error("invalid rebirth measure: {0}")]
    InvalidMeasure(String),

    /// A regeneration log was empty where cycles were required.
    #[error("empty regeneration log")]
    EmptyLog,

    /// The killing rate vanishes on the entire support of a distribution.
    #[error("killing rate is zero on the whole support; reweighting undefined")]
    ZeroReweight,

    /// A linear system was singular (the killed generator is not stable).
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// The chain is reducible where irreducibility is required.
    #[error("reducible chain; communicating classes: {classes:?}")]
    Reducible { classes: Vec<Vec<i64>> },

    /// An iterative eigensolve failed to converge.
    #[error("eigensolve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Two empirical distributions do not share a support.
    #[error("mismatched supports: {0}")]
    MismatchedSupport(String),

    /// A statistical test received fewer samples than it needs.
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    /// Expected counts below the chi-square validity floor even after pooling.
    #[error("expected count {min_expected:.3} below 5 after pooling")]
    ExpectedCountTooSmall { min_expected: f64 },

    /// A contingency-table marginal collapsed onto a single bin.
    #[error("degenerate marginal: {0}")]
    DegenerateMarginal(String),

    /// A scenario configuration was malformed.
    #[error("invalid scenario config: {0}")]
    Config(String),

    /// Failure parsing a scenario config file.
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    /// I/O failure writing report files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
