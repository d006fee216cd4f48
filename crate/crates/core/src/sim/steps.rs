//! Single-step kernels. Every kernel has a `_with` form taking the Gaussian
//! increments explicitly so that schemes can be compared on shared noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::flows::{bernoulli_flow_raw, merged_noise_flow};
use crate::crn::{CondCirPlan, ReactionNetwork};
use crate::error::{Error, Result};

/// How Euler–Maruyama handles negative components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativityPolicy {
    Truncate,
    Abs,
}

pub(crate) fn fill_normals<R: Rng + ?Sized>(rng: &mut R, sd: f64, out: &mut [f64]) {
    for w in out {
        let z: f64 = rng.sample(StandardNormal);
        *w = sd * z;
    }
}

/// In-place EuM step. Returns `(clamps, finite)`.
pub(crate) fn eum_apply(
    net: &ReactionNetwork,
    x: &mut [f64],
    theta: &[f64],
    h: f64,
    dw: &[f64],
    policy: NegativityPolicy,
    props: &mut [f64],
) -> (u64, bool) {
    net.fill_propensities(x, theta, props);
    let r = net.n_reactions();
    let mut clamps = 0;
    let mut finite = true;
    for (i, xi) in x.iter_mut().enumerate() {
        let mut v = *xi;
        for j in 0..r {
            let nu = net.nu(i, j);
            if nu != 0.0 {
                let a = props[j].max(0.0);
                v += nu * (a * h + a.sqrt() * dw[j]);
            }
        }
        if !v.is_finite() {
            finite = false;
        } else if v < 0.0 {
            clamps += 1;
            v = match policy {
                NegativityPolicy::Truncate => 0.0,
                NegativityPolicy::Abs => -v,
            };
        }
        *xi = v;
    }
    (clamps, finite)
}

/// One Euler–Maruyama step with caller-supplied `N(0, h)` increments, one per
/// reaction. Returns the new state and the number of clamped components.
pub fn eum_step(
    net: &ReactionNetwork,
    x: &[f64],
    theta: &[f64],
    h: f64,
    noise: &[f64],
    policy: NegativityPolicy,
) -> Result<(Vec<f64>, u64)> {
    net.check_state(x)?;
    net.check_params(theta)?;
    if noise.len() != net.n_reactions() {
        return Err(Error::Config(format!("expected {} increments, got {}", net.n_reactions(), noise.len())));
    }
    let mut out = x.to_vec();
    let mut props = vec![0.0; net.n_reactions()];
    let (clamps, finite) = eum_apply(net, &mut out, theta, h, noise, policy, &mut props);
    if !finite {
        return Err(Error::SimulationDiverged { step: 0 });
    }
    Ok((out, clamps))
}

/// Gauss–Seidel sweep of conditionally-CIR component updates. `dw[j]` is the
/// increment of reaction `j`, shared by every species that reaction touches.
#[allow(clippy::too_many_arguments)]
pub(crate) fn generic_apply(
    net: &ReactionNetwork,
    plan: &CondCirPlan,
    x: &mut [f64],
    theta: &[f64],
    h: f64,
    order: &[usize],
    dw: &[f64],
    c: &mut [f64],
) -> u64 {
    let mut clamps = 0;
    for &i in order {
        let (a, b) = plan.coefficients_into(net, x, theta, i, c);
        let mut y = x[i];
        let mut sum_c2 = 0.0;
        let mut noise_in = 0.0;
        for t in plan.terms(i) {
            let cj = c[t.reaction];
            if t.linear {
                sum_c2 += cj * cj;
                noise_in += cj * dw[t.reaction];
            } else {
                y += cj * dw[t.reaction];
            }
        }
        let z0 = if y < 0.0 {
            clamps += 1;
            0.0
        } else {
            y.sqrt()
        };
        let (z1, clamped) = bernoulli_flow_raw(z0, a, b, sum_c2, h);
        clamps += clamped as u64;
        let z2 = z1 + 0.5 * noise_in;
        x[i] = z2 * z2;
    }
    clamps
}

fn check_order(order: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for &i in order {
        if i >= d || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Config(format!("species update order {order:?} is not a permutation of 0..{d}")));
        }
    }
    if order.len() != d {
        return Err(Error::Config(format!("species update order {order:?} is not a permutation of 0..{d}")));
    }
    Ok(())
}

/// Generic splitting step with explicit per-reaction `N(0, h)` increments.
/// `order` is a permutation of species indices. Returns the state and clamp count.
pub fn generic_splitting_step_with(
    net: &ReactionNetwork,
    x: &[f64],
    theta: &[f64],
    h: f64,
    order: &[usize],
    dw: &[f64],
) -> Result<(Vec<f64>, u64)> {
    net.check_state(x)?;
    net.check_params(theta)?;
    check_order(order, net.n_species())?;
    if dw.len() != net.n_reactions() {
        return Err(Error::Config(format!("expected {} increments, got {}", net.n_reactions(), dw.len())));
    }
    let plan = CondCirPlan::new(net)?;
    let mut out = x.to_vec();
    let mut c = vec![0.0; net.n_reactions()];
    let clamps = generic_apply(net, &plan, &mut out, theta, h, order, dw, &mut c);
    Ok((out, clamps))
}

pub fn generic_splitting_step<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    x: &[f64],
    theta: &[f64],
    h: f64,
    order: &[usize],
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    let mut dw = vec![0.0; net.n_reactions()];
    fill_normals(rng, h.sqrt(), &mut dw);
    generic_splitting_step_with(net, x, theta, h, order, &dw)
}

/// Number of Gaussian increments consumed by one Repressilator Strang step.
pub const REPRESSILATOR_NOISES: usize = 9;

#[inline]
fn hill(p: f64, theta: &[f64]) -> f64 {
    let (alpha0, alpha, n, k) = (theta[0], theta[1], theta[2], theta[4]);
    alpha0 + alpha / (1.0 + (p.max(0.0) / k).powf(n))
}

fn repressilator_m_block(x: &mut [f64], theta: &[f64], h: f64, dw: &[f64], clamps: &mut u64) {
    let gamma = theta[5];
    for g in 0..3 {
        let repressor = 2 * ((g + 2) % 3) + 1;
        let s = hill(x[repressor], theta);
        x[2 * g] = merged_noise_flow(x[2 * g], gamma, s, h, dw[g], clamps);
    }
}

/// In-place Repressilator Strang step. `dw` holds three `N(0, h/2)` mRNA
/// increments, three `N(0, h)` protein increments and three more `N(0, h/2)`
/// mRNA increments, in that order.
pub(crate) fn repressilator_apply(x: &mut [f64], theta: &[f64], h: f64, dw: &[f64]) -> u64 {
    let mut clamps = 0;
    let beta = theta[3];
    repressilator_m_block(x, theta, 0.5 * h, &dw[0..3], &mut clamps);
    for g in 0..3 {
        x[2 * g + 1] = merged_noise_flow(x[2 * g + 1], beta, beta * x[2 * g], h, dw[3 + g], &mut clamps);
    }
    repressilator_m_block(x, theta, 0.5 * h, &dw[6..9], &mut clamps);
    clamps
}

pub(crate) fn fill_repressilator_noise<R: Rng + ?Sized>(rng: &mut R, h: f64, dw: &mut [f64]) {
    fill_normals(rng, (0.5 * h).sqrt(), &mut dw[0..3]);
    fill_normals(rng, h.sqrt(), &mut dw[3..6]);
    fill_normals(rng, (0.5 * h).sqrt(), &mut dw[6..9]);
}

fn check_len(x: &[f64], d: usize, what: &str) -> Result<()> {
    if x.len() != d {
        return Err(Error::Config(format!("{what}: expected length {d}, got {}", x.len())));
    }
    Ok(())
}

/// Repressilator Strang step on state `(M1, P1, M2, P2, M3, P3)` with
/// `theta = (alpha0, alpha, n, beta, K, gamma)`.
pub fn repressilator_strang_step_with(x: &[f64], theta: &[f64], h: f64, dw: &[f64]) -> Result<(Vec<f64>, u64)> {
    check_len(x, 6, "state")?;
    check_len(theta, 6, "parameters")?;
    check_len(dw, REPRESSILATOR_NOISES, "increments")?;
    let mut out = x.to_vec();
    let clamps = repressilator_apply(&mut out, theta, h, dw);
    Ok((out, clamps))
}

pub fn repressilator_strang_step<R: Rng + ?Sized>(
    x: &[f64],
    theta: &[f64],
    h: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    let mut dw = [0.0; REPRESSILATOR_NOISES];
    fill_repressilator_noise(rng, h, &mut dw);
    repressilator_strang_step_with(x, theta, h, &dw)
}

#[inline]
fn cir_update(x: f64, a: f64, b: f64, sum_c2: f64, h: f64, noise_in: f64, clamps: &mut u64) -> f64 {
    let (z, clamped) = bernoulli_flow_raw(x.max(0.0).sqrt(), a, b, sum_c2, h);
    *clamps += clamped as u64;
    let z = z + 0.5 * noise_in;
    z * z
}

#[inline]
fn lv_x1(x: &mut [f64], theta: &[f64], h: f64, w1: f64, w2: f64, clamps: &mut u64) {
    let (t1, t2) = (theta[0], theta[1]);
    let x2 = x[1];
    let c11 = t1.sqrt();
    let c12 = -(t2 * x2).sqrt();
    x[0] = cir_update(x[0], 0.0, -(t1 - t2 * x2), c11 * c11 + c12 * c12, h, c11 * w1 + c12 * w2, clamps);
}

#[inline]
fn lv_x2(x: &mut [f64], theta: &[f64], h: f64, w2: f64, w3: f64, clamps: &mut u64) {
    let (t2, t3) = (theta[1], theta[2]);
    let x1 = x[0];
    let c22 = (t2 * x1).sqrt();
    let c23 = -t3.sqrt();
    x[1] = cir_update(x[1], 0.0, -(t2 * x1 - t3), c22 * c22 + c23 * c23, h, c22 * w2 + c23 * w3, clamps);
}

/// Increments per Lotka–Volterra Strang step.
pub const LV_STRANG_NOISES: usize = 5;

/// In-place Lotka–Volterra Strang step. `dw = (W1a, W2a, W1b, W2b, W3)`:
/// the first four are `N(0, h/2)` increments of the two X1 half-steps, the
/// X2 full step uses `W2a + W2b` for the shared reaction and `W3 ~ N(0, h)`.
pub(crate) fn lv_strang_apply(x: &mut [f64], theta: &[f64], h: f64, dw: &[f64]) -> u64 {
    let mut clamps = 0;
    lv_x1(x, theta, 0.5 * h, dw[0], dw[1], &mut clamps);
    lv_x2(x, theta, h, dw[1] + dw[3], dw[4], &mut clamps);
    lv_x1(x, theta, 0.5 * h, dw[2], dw[3], &mut clamps);
    clamps
}

pub(crate) fn fill_lv_strang_noise<R: Rng + ?Sized>(rng: &mut R, h: f64, dw: &mut [f64]) {
    fill_normals(rng, (0.5 * h).sqrt(), &mut dw[0..4]);
    fill_normals(rng, h.sqrt(), &mut dw[4..5]);
}

/// In-place Lotka–Volterra Lie–Trotter step `X2 o X1` with `dw ~ N(0, h)` per reaction.
pub(crate) fn lv_lie_trotter_apply(x: &mut [f64], theta: &[f64], h: f64, dw: &[f64]) -> u64 {
    let mut clamps = 0;
    lv_x1(x, theta, h, dw[0], dw[1], &mut clamps);
    lv_x2(x, theta, h, dw[1], dw[2], &mut clamps);
    clamps
}

pub fn lv_strang_step_with(x: &[f64], theta: &[f64], h: f64, dw: &[f64]) -> Result<(Vec<f64>, u64)> {
    check_len(x, 2, "state")?;
    check_len(theta, 3, "parameters")?;
    check_len(dw, LV_STRANG_NOISES, "increments")?;
    let mut out = x.to_vec();
    let clamps = lv_strang_apply(&mut out, theta, h, dw);
    Ok((out, clamps))
}

pub fn lv_strang_step<R: Rng + ?Sized>(x: &[f64], theta: &[f64], h: f64, rng: &mut R) -> Result<(Vec<f64>, u64)> {
    let mut dw = [0.0; LV_STRANG_NOISES];
    fill_lv_strang_noise(rng, h, &mut dw);
    lv_strang_step_with(x, theta, h, &dw)
}

pub fn lv_lie_trotter_step_with(x: &[f64], theta: &[f64], h: f64, dw: &[f64]) -> Result<(Vec<f64>, u64)> {
    check_len(x, 2, "state")?;
    check_len(theta, 3, "parameters")?;
    check_len(dw, 3, "increments")?;
    let mut out = x.to_vec();
    let clamps = lv_lie_trotter_apply(&mut out, theta, h, dw);
    Ok((out, clamps))
}

/// In-place two-pool Lie–Trotter step `X2 o X1`; `dw ~ N(0, h)` per reaction,
/// with the increments of reactions 3 and 4 shared by both species.
pub(crate) fn twopool_apply(x: &mut [f64], theta: &[f64], h: f64, dw: &[f64]) -> u64 {
    let (t1, t2, t3, t4) = (theta[0], theta[1], theta[2], theta[3]);
    let mut clamps = 0;

    let c11 = -t1.sqrt();
    let c13 = -t3.sqrt();
    let c14 = (t4 * x[1]).sqrt();
    let y = x[0] + c14 * dw[3];
    let y = if y < 0.0 {
        clamps += 1;
        0.0
    } else {
        y
    };
    x[0] = cir_update(y, t4 * x[1], t1 + t3, c11 * c11 + c13 * c13, h, c11 * dw[0] + c13 * dw[2], &mut clamps);

    let c22 = -t2.sqrt();
    let c24 = -t4.sqrt();
    let c23 = (t3 * x[0]).sqrt();
    let y = x[1] + c23 * dw[2];
    let y = if y < 0.0 {
        clamps += 1;
        0.0
    } else {
        y
    };
    x[1] = cir_update(y, t3 * x[0], t2 + t4, c22 * c22 + c24 * c24, h, c22 * dw[1] + c24 * dw[3], &mut clamps);
    clamps
}

pub fn twopool_lietrotter_step_with(x: &[f64], theta: &[f64], h: f64, dw: &[f64]) -> Result<(Vec<f64>, u64)> {
    check_len(x, 2, "state")?;
    if theta.len() < 4 {
        return Err(Error::Config(format!("parameters: expected at least 4, got {}", theta.len())));
    }
    check_len(dw, 4, "increments")?;
    let mut out = x.to_vec();
    let clamps = twopool_apply(&mut out, theta, h, dw);
    Ok((out, clamps))
}

pub fn twopool_lietrotter_step<R: Rng + ?Sized>(
    x: &[f64],
    theta: &[f64],
    h: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, u64)> {
    let mut dw = [0.0; 4];
    fill_normals(rng, h.sqrt(), &mut dw);
    twopool_lietrotter_step_with(x, theta, h, &dw)
}
