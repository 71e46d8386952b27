//! Causally consistent minimal-cost counterfactuals for tabular classifiers.
//!
//! Given a classifier, a set of causal rules and an instance that received
//! the undesired decision, the engine finds the cheapest state that satisfies
//! every causal rule and escapes the classifier's decision rules. Feature
//! changes that follow automatically from causal rules are free; only the
//! changes the user has to make are charged.

pub mod bench;
pub mod blackbox;
pub mod causal;
pub mod cost;
pub mod error;
pub mod fixtures;
pub mod learner;
pub mod rules;
pub mod schema;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
