//! Demographic bias evaluation for expression classifiers.
//!
//! Two views of bias are supported: differential association of expression
//! embeddings with attribute-group probe embeddings, and true-positive-rate
//! disparities in prediction logs. Both are certified by one-sided
//! permutation tests, and only significant disparities are kept.

pub mod association;
pub mod cli;
pub mod embedio;
pub mod error;
pub mod evalcmp;
mod kernel;
pub mod perfmetrics;
pub mod report;
pub mod statmod;
pub mod synthgen;

pub use error::{Error, Result};
