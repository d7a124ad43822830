//! Growth and risk analytics for mobile apps.
//!
//! The crate bundles the cloud-side statistical machinery behind an app
//! marketplace: ranking app risk from multi-view features ([`risk`]) and from
//! crowd annotations ([`crowd`]), cohort retention and survival curves
//! ([`retention`]), campaign effect estimation and budget allocation
//! ([`campaign`]), Poisson-factorization recommenders ([`rec`]), and an
//! embedding-based maturity-rating pipeline ([`maturity`]).
//!
//! All fitting routines are deterministic: randomness flows from explicit
//! seeds through [`rng::SplitMix64`] and every fit is single-threaded, so a
//! fixed (input, seed) pair reproduces results bit for bit.

pub mod campaign;
pub mod crowd;
pub mod error;
pub mod ingest;
pub mod matrix_serde;
pub mod maturity;
pub mod rec;
pub mod retention;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
