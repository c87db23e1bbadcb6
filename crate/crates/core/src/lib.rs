//! Multi-contrast MRI super-resolution.
//!
//! A low-resolution patch of one contrast is super-resolved by an
//! encoder-decoder generator, optionally guided by features of a registered
//! high-resolution patch of another contrast, and trained as a WGAN-GP
//! generator with pixel, perceptual and texture losses.

pub mod dataset;
pub mod error;
pub mod image;
pub mod kspace;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod phantom;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
