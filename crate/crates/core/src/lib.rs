//! PolySet: polymers represented as finite, weighted ensembles of chains.
//!
//! A polymer sample is not one molecule but a distribution of chain lengths.
//! This crate builds that distribution explicitly:
//!
//! * [`mwd`] fits continuous molar-mass distributions to a target `(Mn, Đ)`
//!   and evaluates their analytic moments.
//! * [`ensemble`] turns a fitted distribution into a finite set of weighted
//!   chains and measures its empirical moments.
//! * [`encode`] featurizes chains and aggregates them into a fixed-size
//!   embedding, alongside the scalar `(Mn, Đ)` baseline.
//! * [`dataset`] generates a synthetic corpus with deliberate iso-`(Mn, Đ)`
//!   groups, persists it as JSON Lines and splits it.
//! * [`learn`] is a small MLP regressor (Adam, MSE) with metrics.
//! * [`analyze`] holds PCA, rank correlation and degeneracy reports.

pub mod analyze;
pub mod dataset;
pub mod encode;
pub mod ensemble;
pub mod error;
pub mod learn;
pub mod mwd;
pub mod seed;
pub mod special;

pub use error::{PolysetError, Result};
