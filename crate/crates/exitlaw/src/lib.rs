//! Simulation and exact analysis of continuous-time Markov processes with
//! soft killing.
//!
//! The crate centres on one identity: the law of the location occupied the
//! instant before a killed process dies equals the killing-rate-reweighted
//! invariant distribution of the matching resurrected process (the killed
//! process instantaneously reborn from a fixed measure at every kill). Both
//! sides are computable here, so the identity can be checked two independent
//! ways:
//!
//! - **exactly**, for finite chains, by dense linear algebra on the generator
//!   matrix ([`solver`]);
//! - **statistically**, by unbiased trajectory simulation of the killed and
//!   resurrected processes ([`killing`], [`resurrection`]) compared with
//!   total-variation, Kolmogorov-Smirnov, and chi-square tests ([`stats`]).
//!
//! Supported dynamics are finite CTMCs (including truncated lattice walks)
//! and the deterministic unit-velocity ray, with per-state or
//! piecewise-polynomial killing rates ([`process`]).
//!
//! See the crate `examples/` directory for one runnable program per
//! capability, and the `exitlaw` binary for the scenario front end.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod killing;
pub mod output;
pub mod process;
pub mod resurrection;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
