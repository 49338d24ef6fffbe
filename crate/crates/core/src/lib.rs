//! Causal-structure regularisation for supervised neural networks.
//!
//! A prediction network is trained jointly with a masked, parallel
//! reconstruction network over the target and all features. The input
//! layers double as a weighted adjacency matrix that is pushed towards a
//! DAG, so that the shared hidden layers concentrate on the features that
//! sit in the target's causal neighbourhood.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod loss;
pub mod network;
pub mod regularizers;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
