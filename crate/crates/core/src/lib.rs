//! Patient stratification engine for radiotherapy dose-volume data.
//!
//! The pipeline: build a feature space from per-organ DVH windows ([`features`]),
//! cluster patients and rank clusters by dose ([`clustering`]), test each cluster
//! against a binarized symptom outcome with likelihood-ratio tests ([`stats`]),
//! explore single-edit changes of the feature space ([`search`]), and explain a
//! cluster or outcome with constrained dose-threshold rules ([`rules`]).
//! [`pipeline`] ties these together for the CLI and the HTTP service.

pub mod cohort;
pub mod clustering;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod rules;
pub mod search;
pub mod stats;
#[cfg(test)]
mod testutil;
mod util;

pub use error::{Error, ErrorKind, Result};
pub use util::{quantile_sorted, write_atomic};
