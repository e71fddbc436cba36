//! Prediction rule ensembles (PRE) with model-based surrogate data.
//!
//! The pipeline fits a stochastic boosting ensemble of shallow trees,
//! harvests every split of every tree as a binary rule, and selects a sparse
//! subset of rules (plus optional linear terms) with the Lasso. Besides the
//! regular Lasso on the training data, two selection strategies use the
//! boosting model as an oracle that labels a large generated dataset:
//!
//! * **surrogate**: two successive Lasso fits on independently generated,
//!   oracle-labelled data;
//! * **nested**: a Lasso on the real training data, restricted to the terms
//!   kept by the first surrogate level.
//!
//! [`experiment`] ties the pieces into the repeated split/fit/evaluate
//! protocol and produces JSON/CSV reports.

pub mod boosting;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lasso;
pub mod matrix;
pub mod rules;
pub mod seed;
pub mod surrogate;
pub mod tree;

pub use error::{Error, Result};
