//! Splitting integrators for the chemical Langevin equation and
//! likelihood-free inference with data-conditional simulation.

pub mod abc;
pub mod crn;
pub mod obs;
pub mod error;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod summaries;

pub use error::{Error, Result};
