//! Approximate Bayesian computation for PET kinetic modelling.
//!
//! The crate simulates time-activity curves (TACs) from the one-tissue and
//! lp-ntPET models, adds scaled-Poisson frame noise, and estimates lp-ntPET
//! parameters three ways:
//!
//! - rejection ABC against a precomputed simulation cache ([`abc`]), with four
//!   summary statistics ([`summaries`]),
//! - the weighted least squares basis-function method ([`wls`]),
//! - random-walk Metropolis under a Gaussian error model ([`mcmc`]).
//!
//! Posterior predictive bands ([`ppc`]) compare summaries, and [`batch`]
//! runs the method comparison over many noise realisations.

pub mod abc;
pub mod batch;
pub mod error;
pub mod io;
pub mod kinetics;
pub mod mcmc;
pub mod noise;
pub mod ppc;
pub mod prior;
pub mod scenario;
pub mod seed;
pub mod stats;
pub mod summaries;
pub mod wls;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
