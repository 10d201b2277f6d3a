//! Desk-scale toolkit for studying shape bias under adversarial training.
//!
//! The crate trains a small convolutional classifier on a synthetic
//! shape/texture benchmark, with and without ℓ2/ℓ∞ adversarial training, then
//! measures cue-conflict behaviour, accuracy under parametric distortions,
//! error consistency between models, and the radial frequency spectra of the
//! evaluation sets.

pub mod adversarial;
pub mod dataset;
pub mod distortions;
mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod runner;
pub mod spectrum;

pub use error::{Error, Result};
pub use image::Image;

/// Toolkit version recorded in every result file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
