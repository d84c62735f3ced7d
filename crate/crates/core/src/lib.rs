//! Opinion-free blind image quality assessment.
//!
//! Trains a no-reference quality model without human ratings: synthetic
//! distortions provide the training corpus, an ensemble of full-reference
//! metrics provides pseudo-binary pair labels, a Thurstone-style pairwise
//! likelihood with learnable per-agent reliabilities provides the objective,
//! and adversarial feature alignment (with domain mixup) adapts the model to
//! an unlabeled target domain. An evaluation harness covers rank
//! correlations, logistic-linearized Pearson correlation, and maximum-
//! differentiation pair search.

pub mod agents;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod distortion;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod image;
pub mod model;
pub mod objectives;
pub mod pairs;
pub mod trainer;

pub use error::{Error, Result};
