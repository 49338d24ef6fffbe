//! Numeric substrate: dense matrices, the matrix exponential, spectral norm
//! and a reproducible random number generator.

mod expm;
mod matrix;
mod rng;
mod spectral;

pub use expm::{mat_exp, TAYLOR_ORDER};
pub use matrix::{gemm, Matrix};
pub use rng::{rng_gaussian, Rng};
pub use spectral::{spectral_norm, MAX_POWER_ITERATIONS};
