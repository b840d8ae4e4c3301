//! Desk-scale adversarial robustness laboratory.
//!
//! Trains small convolutional classifiers from scratch, attacks them with
//! PGD and spatial grid search, builds robust and non-robust variant
//! datasets, and tracks attack success rate over training.

mod container;
pub mod attacks;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod robustify;
mod rng;
pub mod tensor;
pub mod transforms;

pub use error::{LabError, Result};
pub use tensor::Tensor;
