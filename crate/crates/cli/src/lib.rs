//! Experiment driver for the `clesplit` toolkit.

pub mod config;
pub mod experiments;
pub mod validate;
