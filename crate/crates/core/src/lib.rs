//! Bayesian filtering of progressively revealed outcomes, meta-learned
//! priors, and a Thompson-sampling bandit simulator for delayed rewards.

pub mod analysis;
pub mod bandit;
pub mod belief;
pub mod contextual;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod output;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
