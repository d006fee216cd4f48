//! Likelihood-free inference by sequential Monte Carlo ABC, with and
//! without data-conditional path sampling.

mod dc;
mod driver;
mod problem;
mod smc;

pub use dc::{data_conditional_sample, DcConfig, DcMode, DcSample};
pub use driver::{
    run, run_abc_smc, run_abc_smc_dc, write_cloud_csv, AbcReport, AbcRun, AbcSettings, Algorithm, Pretraining,
    RoundDiagnostics, StopReason,
};
pub use problem::{ForwardSample, InferenceProblem, NoiseSpec};
pub use smc::{
    dc_log_weight, dc_particle_weight, epsilon_update, mean_and_cov, normalize_log_weights, sample_categorical,
    smc_log_weight, smc_particle_weight, synthetic_likelihood_stats, weighted_cov, weighted_mean, ParticleCloud,
    Perturbation, PriorSpec, SyntheticLikelihoodStats, MAX_PRIOR_REJECTIONS,
};
