//! Oracle checks run by `clesplit validate`.

use std::collections::BTreeMap;

use anyhow::Result;
use clesplit::abc::{
    dc_log_weight, smc_log_weight, synthetic_likelihood_stats, ParticleCloud, Perturbation, PriorSpec,
};
use clesplit::crn::{two_pool, TWO_POOL_THETA};
use clesplit::rng;
use clesplit::sim::{
    bernoulli_flow_raw, cir_component_step, cir_exact_sample, gillespie_ssa, simulate_observed, CirParams,
    SchemeConfig, SchemeKind, Stepper, TimeGrid,
};
use clesplit::stats::{ks_two_sample, mean, variance};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::ValidateSpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

fn suite(name: &str, metrics: &[(&str, f64)], thresholds: &[(&str, f64)], passed: bool) -> SuiteResult {
    SuiteResult {
        name: name.into(),
        passed,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        thresholds: thresholds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

pub fn run_all(spec: &ValidateSpec, seed: u64) -> Result<ValidationReport> {
    let suites = vec![
        cir_exactness(spec.cir_paths, spec.cir_h, seed)?,
        bernoulli_oracle(spec.bernoulli_points, spec.corrupt_flow_factor, seed),
        two_pool_mean(spec.ssa_paths, spec.ssa_paths, spec.ssa_t, 0.02, seed)?,
        reduction_identity(spec.identity_cases, seed)?,
    ];
    Ok(ValidationReport { schema_version: REPORT_SCHEMA_VERSION, passed: suites.iter().all(|s| s.passed), suites })
}

/// Dormand–Prince 5(4) with step-size control for a scalar autonomous ODE.
pub fn dopri<F: Fn(f64) -> f64>(f: F, y0: f64, t: f64, tol: f64) -> f64 {
    let (mut y, mut s) = (y0, 0.0);
    let mut dt = t / 100.0;
    while s < t {
        dt = dt.min(t - s);
        let k1 = f(y);
        let k2 = f(y + dt * (k1 / 5.0));
        let k3 = f(y + dt * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = f(y + dt * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
        let k5 = f(y + dt * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4));
        let k6 = f(y + dt
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5));
        let y5 = y + dt
            * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5 + 11.0 / 84.0 * k6);
        let k7 = f(y5);
        let y4 = y + dt
            * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4 - 92097.0 / 339200.0 * k5
                + 187.0 / 2100.0 * k6
                + 1.0 / 40.0 * k7);
        let err = (y5 - y4).abs();
        if err <= tol {
            y = y5;
            s += dt;
        }
        let factor = if err == 0.0 { 4.0 } else { 0.9 * (tol / err).powf(0.2) };
        dt *= factor.clamp(0.2, 4.0);
    }
    y
}

/// Pure CIR `dX = beta (alpha - X) dt + sigma sqrt(X) dW` from `x0 = 1` to
/// `T = 1`: splitting against the exact sampler.
pub fn cir_exactness(paths: usize, h: f64, seed: u64) -> Result<SuiteResult> {
    let p = CirParams::new(2.0, 1.0, 0.5)?;
    let k = p.coefficients();
    let steps = (1.0 / h).round() as usize;
    let sd = h.sqrt();
    let split: Vec<f64> = (0..paths as u64)
        .map(|i| {
            let mut r = rng::stream(seed, &[0x4349_52, 0, i]);
            let mut x = 1.0;
            for _ in 0..steps {
                let dw: f64 = r.sample::<f64, _>(StandardNormal) * sd;
                x = cir_component_step(x, &k, h, &[dw], &[]).0;
            }
            x
        })
        .collect();
    let exact: Vec<f64> = (0..paths as u64)
        .map(|i| cir_exact_sample(&p, 1.0, 1.0, &mut rng::stream(seed, &[0x4349_52, 1, i])))
        .collect::<clesplit::Result<_>>()?;
    let n = paths as f64;
    let (m1, m2) = (mean(&split), mean(&exact));
    let (v1, v2) = (variance(&split), variance(&exact));
    let mean_z = (m1 - m2) / (v1 / n + v2 / n).sqrt();
    let fourth = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var_se = ((fourth(&split, m1) - v1 * v1) / n + (fourth(&exact, m2) - v2 * v2) / n).sqrt();
    let var_z = (v1 - v2) / var_se;
    let ks = ks_two_sample(&split, &exact);
    let passed = mean_z.abs() < 3.0 && var_z.abs() < 3.0 && ks < 0.02;
    Ok(suite(
        "cir-exact",
        &[("mean_z", mean_z), ("variance_z", var_z), ("ks", ks)],
        &[("abs_z", 3.0), ("ks", 0.02)],
        passed,
    ))
}

/// Bernoulli flow against adaptive Runge–Kutta on `z' = -b z / 2 + (a / 2 - s / 8) / z`.
/// `corrupt` scales the decay constant handed to the flow.
pub fn bernoulli_oracle(points: usize, corrupt: f64, seed: u64) -> SuiteResult {
    let mut r = rng::stream(seed, &[0x4245_524e]);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < points {
        let z: f64 = r.random_range(0.1..5.0);
        let a: f64 = r.random_range(0.0..5.0);
        let b: f64 = r.random_range(-2.0..2.0);
        let s: f64 = r.random_range(0.0..4.0);
        let h: f64 = r.random_range(0.0..1.0);
        let k = a - 0.25 * s;
        let u_end = if b.abs() < 1e-10 { z * z + k * h } else { z * z * (-b * h).exp() + k * (1.0 - (-b * h).exp()) / b };
        // Stay in the nonnegative-radicand region, away from z = 0.
        if u_end.min(z * z) < 0.05 {
            continue;
        }
        let (got, _) = bernoulli_flow_raw(z, a, b * corrupt, s, h);
        let oracle = dopri(|y: f64| -0.5 * b * y + (0.5 * a - s / 8.0) / y, z, h, 1e-13);
        worst = worst.max((got - oracle).abs());
        checked += 1;
    }
    suite("bernoulli-flow", &[("max_abs_error", worst)], &[("max_abs_error", 1e-8)], worst <= 1e-8)
}

/// Two-pool ensemble means at `t` from the splitting scheme and from the
/// SSA, each against `exp(A t) x0` for the linear drift matrix `A`.
pub fn two_pool_mean(split_paths: usize, ssa_paths: usize, t: f64, h: f64, seed: u64) -> Result<SuiteResult> {
    let net = two_pool();
    let th = TWO_POOL_THETA;
    let x0 = [100.0, 0.0];
    let a = DMatrix::from_row_slice(2, 2, &[-(th[0] + th[2]), th[3], th[2], -(th[1] + th[3])]);
    let exact = (a * t).exp() * DVector::from_column_slice(&x0);
    let steps = (t / h).round() as usize;
    let grid = TimeGrid::new(0.0, 1, t, steps)?;
    let scheme = SchemeConfig::new(SchemeKind::SplitTwoPoolLieTrotter, seed);
    let mut split = [0.0; 2];
    for k in 0..split_paths as u64 {
        let mut stepper = Stepper::new(&net, &th, &scheme)?;
        let run = simulate_observed(&mut stepper, &x0, &grid, &mut rng::stream(seed, &[0x5353_41, 0, k]));
        split[0] += run.obs[2] / split_paths as f64;
        split[1] += run.obs[3] / split_paths as f64;
    }
    let mut ssa = [0.0; 2];
    for k in 0..ssa_paths as u64 {
        let path = gillespie_ssa(&net, &x0, &th, t, &mut rng::stream(seed, &[0x5353_41, 1, k]))?;
        let x = path.state_at(t);
        ssa[0] += x[0] / ssa_paths as f64;
        ssa[1] += x[1] / ssa_paths as f64;
    }
    // Relative error, or absolute where the exact mean is below 1.
    let err = |got: f64, want: f64| if want.abs() < 1.0 { (got - want).abs() } else { (got - want).abs() / want.abs() };
    let metrics = [
        ("split_x1_error", err(split[0], exact[0])),
        ("split_x2_error", err(split[1], exact[1])),
        ("ssa_x1_error", err(ssa[0], exact[0])),
        ("ssa_x2_error", err(ssa[1], exact[1])),
    ];
    let passed = metrics.iter().all(|(_, v)| *v < 0.05);
    Ok(suite("two-pool-mean", &metrics, &[("error", 0.05)], passed))
}

/// Data-conditional weights with coinciding synthetic likelihoods against
/// forward-only weights on random clouds.
pub fn reduction_identity(cases: usize, seed: u64) -> Result<SuiteResult> {
    let mut r = rng::stream(seed, &[0x4944_454e]);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let p = 1 + case % 4;
        let q = 1 + (case / 4) % 3;
        let low: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..0.0)).collect();
        let high: Vec<f64> = low.iter().map(|l| l + r.random_range(0.5..3.0)).collect();
        let prior = PriorSpec::new((0..p).map(|k| format!("t{k}")).collect(), low, high)?;
        let m = p + 1 + case % 7;
        let thetas: Vec<Vec<f64>> = (0..m).map(|_| prior.sample(&mut r)).collect();
        let mut weights: Vec<f64> = (0..m).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let cloud = ParticleCloud {
            round: 1,
            thetas,
            weights,
            distances: vec![0.0; m],
            epsilon: f64::INFINITY,
            proposal_cov: None,
        };
        let kernel = Perturbation::new(&cloud)?;
        let theta = prior.sample(&mut r);
        let s: Vec<Vec<f64>> = (0..2 + case % 5).map(|_| (0..q).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let stats = synthetic_likelihood_stats(&s, &s)?;
        let s_dc: Vec<f64> = (0..q).map(|_| r.random_range(-3.0..3.0)).collect();
        let a = dc_log_weight(&theta, &s_dc, &prior, Some(&kernel), &stats)?;
        let b = smc_log_weight(&theta, &prior, Some(&kernel));
        worst = worst.max((a - b).abs());
    }
    Ok(suite("reduction-identity", &[("max_log_weight_gap", worst)], &[("max_log_weight_gap", 1e-12)], worst <= 1e-12))
}
