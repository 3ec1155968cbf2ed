//! Token-similarity escalation in randomly initialized transformer blocks.
//!
//! The crate measures how fast stacked encoder blocks drive the rows of the
//! token matrix toward each other, and compares the measurements with
//! closed-form expectations and spectral bounds.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod metrics;
pub mod spectral;
pub mod theory;
pub mod transformer;

pub use error::{Error, Result};
pub use matrix::RealMatrix;
pub use rng::RngStream;
