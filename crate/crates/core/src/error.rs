use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, unknown indices, invalid settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A propensity carries the species with degree >= 2 (or non-affinely),
    /// so the species' CLE cannot be written in perturbed conditionally-CIR form.
    #[error("reaction {reaction} is not affine in species {species}; the network is not conditionally CIR")]
    NotConditionallyCir { species: usize, reaction: usize },

    /// Non-finite state produced by an integrator.
    #[error("simulation diverged at fine step {step}")]
    SimulationDiverged { step: usize },

    /// Linear algebra failure (e.g. covariance not PSD after jitter).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
