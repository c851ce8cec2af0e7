//! IRS-assisted mmWave joint beam training and positioning.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod positioning;
pub mod rng;
pub mod sounding;

pub use error::{Error, Result};
pub use num_complex::Complex64;
