//! Deterministic integrators for the reaction-rate equations `dx = nu a(x) dt`.

use crate::crn::{CondCirPlan, ReactionNetwork};
use crate::error::{Error, Result};

/// Exact flow of `dx = (a x + b) dt` over time `h`.
#[inline]
pub fn linear_ode_flow(x: f64, a: f64, b: f64, h: f64) -> f64 {
    if a.abs() < 1e-10 {
        x + b * h
    } else {
        // x e^{ah} + b/a (e^{ah} - 1)
        x + (x + b / a) * (a * h).exp_m1()
    }
}

fn block_flow(net: &ReactionNetwork, plan: &CondCirPlan, x: &mut [f64], theta: &[f64], h: f64, block: &[usize], c: &mut [f64]) {
    for &i in block {
        let (a_tilde, b_tilde) = plan.coefficients_into(net, x, theta, i, c);
        x[i] = linear_ode_flow(x[i], -b_tilde, a_tilde, h);
    }
}

/// Strang composition of exact conditionally-linear flows over `blocks`:
/// half steps of the leading blocks, a full step of the last, then the
/// leading blocks again in reverse.
pub(crate) fn cond_linear_apply(
    net: &ReactionNetwork,
    plan: &CondCirPlan,
    x: &mut [f64],
    theta: &[f64],
    h: f64,
    blocks: &[Vec<usize>],
    c: &mut [f64],
) {
    let Some((last, leading)) = blocks.split_last() else {
        return;
    };
    for b in leading {
        block_flow(net, plan, x, theta, 0.5 * h, b, c);
    }
    block_flow(net, plan, x, theta, h, last, c);
    for b in leading.iter().rev() {
        block_flow(net, plan, x, theta, 0.5 * h, b, c);
    }
}

/// Default block partition: mRNA/protein blocks for the Repressilator layout,
/// otherwise one block per species in index order.
pub fn default_blocks(net: &ReactionNetwork) -> Vec<Vec<usize>> {
    if *net == crate::crn::repressilator() {
        vec![vec![0, 2, 4], vec![1, 3, 5]]
    } else {
        (0..net.n_species()).map(|i| vec![i]).collect()
    }
}

pub(crate) fn check_blocks(blocks: &[Vec<usize>], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for &i in blocks.iter().flatten() {
        if i >= d || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Config(format!("blocks {blocks:?} do not partition 0..{d}")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Config(format!("blocks {blocks:?} do not partition 0..{d}")));
    }
    Ok(())
}

/// One conditionally-linear Strang step with the default block partition.
pub fn cond_linear_ode_step(net: &ReactionNetwork, x: &[f64], theta: &[f64], h: f64) -> Result<Vec<f64>> {
    cond_linear_ode_step_blocks(net, x, theta, h, &default_blocks(net))
}

pub fn cond_linear_ode_step_blocks(
    net: &ReactionNetwork,
    x: &[f64],
    theta: &[f64],
    h: f64,
    blocks: &[Vec<usize>],
) -> Result<Vec<f64>> {
    net.check_state(x)?;
    net.check_params(theta)?;
    check_blocks(blocks, net.n_species())?;
    let plan = CondCirPlan::new(net).map_err(|e| Error::Domain(format!("drift is not conditionally linear: {e}")))?;
    let mut out = x.to_vec();
    let mut c = vec![0.0; net.n_reactions()];
    cond_linear_apply(net, &plan, &mut out, theta, h, blocks, &mut c);
    Ok(out)
}

/// Scratch buffers for [`rk4_apply`].
#[derive(Clone, Debug)]
pub(crate) struct Rk4Scratch {
    props: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(d: usize, r: usize) -> Self {
        Self { props: vec![0.0; r], k: std::array::from_fn(|_| vec![0.0; d]), tmp: vec![0.0; d] }
    }
}

pub(crate) fn rk4_apply(net: &ReactionNetwork, x: &mut [f64], theta: &[f64], h: f64, s: &mut Rk4Scratch) {
    let Rk4Scratch { props, k, tmp } = s;
    let [k1, k2, k3, k4] = k;
    net.fill_propensities(x, theta, props);
    net.fill_drift(props, k1);
    for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k1.iter()) {
        *t = xi + 0.5 * h * k;
    }
    net.fill_propensities(tmp, theta, props);
    net.fill_drift(props, k2);
    for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k2.iter()) {
        *t = xi + 0.5 * h * k;
    }
    net.fill_propensities(tmp, theta, props);
    net.fill_drift(props, k3);
    for ((t, xi), k) in tmp.iter_mut().zip(x.iter()).zip(k3.iter()) {
        *t = xi + h * k;
    }
    net.fill_propensities(tmp, theta, props);
    net.fill_drift(props, k4);
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Classical fourth-order Runge–Kutta step of the reaction-rate equations.
pub fn rk4_step(net: &ReactionNetwork, x: &[f64], theta: &[f64], h: f64) -> Result<Vec<f64>> {
    net.check_params(theta)?;
    if x.len() != net.n_species() {
        return Err(Error::Config(format!("expected state of length {}, got {}", net.n_species(), x.len())));
    }
    let mut out = x.to_vec();
    rk4_apply(net, &mut out, theta, h, &mut Rk4Scratch::new(net.n_species(), net.n_reactions()));
    Ok(out)
}
