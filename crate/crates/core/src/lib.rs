pub mod boundaries;
pub mod descriptors;
pub mod error;
pub mod imaging;
pub mod inference;
pub mod parametric;
pub mod pipeline;
pub mod proposals;
pub mod recognition;
pub mod regression;
pub mod synth;

pub use error::{Error, Result};
