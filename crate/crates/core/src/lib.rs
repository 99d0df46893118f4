//! Cross-modal concept bottleneck models.
//!
//! A visual classifier whose discrete bottleneck is shaped, during training
//! only, by agreement with a text-side cross-attention concept extractor.
//! The crate bundles its own autograd engine, the synthetic Shapes dataset,
//! the standard / CBM / XCB models, training, and interpretability metrics.

pub mod autograd;
pub mod error;

pub use autograd::{grad_check, no_grad, Tensor};
pub use error::{Error, Result};
pub mod nn;
pub mod rng;
pub mod data;
pub mod io;
pub mod losses;
pub mod models;
pub mod metrics;
pub mod training;
