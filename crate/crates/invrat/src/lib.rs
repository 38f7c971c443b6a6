//! Invariant-rationalization debiasing for toxic-language detection.
//!
//! A rationale generator, an invariant predictor, and an environment-aware
//! predictor play a minimax game: the generator learns token masks whose
//! predictive power does not depend on the bias-defining environment
//! (lexical attribute or dialect), and the invariant predictor classifies
//! toxicity from the masked text alone.

pub mod attributes;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod game;
pub mod models;
pub mod rationale;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
