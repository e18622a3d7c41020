//! Locally constant networks: models whose Jacobian rows and bias terms,
//! computed in closed form, feed an output head. Each trained network is
//! exactly an oblique decision tree, and several can be stacked into a
//! gradient-boosted ensemble.

pub mod activation;
pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod head;
pub mod io;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod training;
pub mod tree;
pub mod verification;

pub use error::{LcnError, Result};
pub use network::{
    activation_pattern, feature_vector, forward, predict, predict_eval, ActivationPattern,
    Architecture, ForwardTrace, LcnParameters, Variant,
};
