pub mod activations;
pub mod bundling;
pub mod error;
pub mod harness;
pub mod rng;
pub mod snnk;
pub mod stats;
pub mod train;
pub mod urf;

pub use error::{Result, SnnkError};
