//! Fairness-aware second-order pruning for small classifiers.
//!
//! Parameters whose removal costs the unprivileged group little loss but the
//! privileged group a lot are pruned first, shrinking the accuracy gap
//! between the two groups without retraining.

pub mod data;
mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod pruner;
pub mod rng;
pub mod saliency;

pub use error::{Error, Result};
