//! Integrators for the chemical Langevin equation and its deterministic limit.

mod exact;
mod flows;
mod grid;
mod ode;
mod scheme;
mod steps;
mod trajectory;

pub use exact::{cir_exact_sample, gillespie_ssa, CirParams, SsaPath};
pub use flows::{
    bernoulli_flow, bernoulli_flow_raw, brownian_flow, cir_component_step, perturbation_flow, ClampFlags,
    B_TILDE_EPS,
};
pub use grid::TimeGrid;
pub use ode::{cond_linear_ode_step, cond_linear_ode_step_blocks, default_blocks, linear_ode_flow, rk4_step};
pub use scheme::{SchemeConfig, SchemeKind, StepOutcome, Stepper};
pub use steps::{
    eum_step, generic_splitting_step, generic_splitting_step_with, lv_lie_trotter_step_with, lv_strang_step,
    lv_strang_step_with, repressilator_strang_step, repressilator_strang_step_with, twopool_lietrotter_step,
    twopool_lietrotter_step_with, NegativityPolicy, LV_STRANG_NOISES, REPRESSILATOR_NOISES,
};
pub use trajectory::{
    path_rng, read_table, simulate_observed, simulate_path, simulate_path_indexed, simulate_with, ObservedRun,
    Resolution, RunSummary, Table, Trajectory,
};
pub(crate) use trajectory::write_table;
