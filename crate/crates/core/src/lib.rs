//! Triad census and constrained-rewiring null models for temporal
//! collaboration networks.
//!
//! The crate ingests session records (who recorded with whom, on what, in
//! which year), builds a strictly backward-looking co-play index, classifies
//! within-session triads into open / closed / forbidden types, generates
//! degree- and qualification-constrained rewired histories, and relates triad
//! densities to session success with OLS, logit, and negative binomial
//! estimators (with or without leader fixed effects), permutation inference,
//! and nonparametric smoothers.

pub mod error;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod pipeline;
pub mod records;
pub mod rewire;
pub mod seeds;
pub mod stats;
pub mod triads;

pub use error::{Error, Result};
