//! Watermark codec, certified authentication, identity-leakage attacks and
//! residual-information mitigation for post-processing image watermarks.

pub mod attacks;
pub mod certify;
pub mod codec;
pub mod error;
pub mod image;
pub mod metrics;
pub mod rng;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
pub use image::{BitMessage, Image, ResidualImage, Shape, WatermarkedImage};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
