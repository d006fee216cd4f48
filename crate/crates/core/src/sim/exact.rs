//! Exact samplers used as oracles: the CIR transition law and Gillespie's SSA.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::crn::{CondCirCoefficients, ReactionNetwork};
use crate::error::{Error, Result};

/// `dX = beta (alpha - X) dt + sigma sqrt(X) dW`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl CirParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        let p = Self { alpha, beta, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("CIR {name} = {v} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// `2 alpha beta > sigma^2`.
    pub fn feller(&self) -> bool {
        2.0 * self.alpha * self.beta > self.sigma * self.sigma
    }

    pub fn mean(&self, x: f64, t: f64) -> f64 {
        self.alpha + (x - self.alpha) * (-self.beta * t).exp()
    }

    pub fn variance(&self, x: f64, t: f64) -> f64 {
        let e = (-self.beta * t).exp();
        let s2 = self.sigma * self.sigma;
        x * s2 * e * (1.0 - e) / self.beta + self.alpha * s2 * (1.0 - e).powi(2) / (2.0 * self.beta)
    }

    /// The process written in conditionally-CIR form: one in-reaction with
    /// `c~ = sigma`, no perturbation.
    pub fn coefficients(&self) -> CondCirCoefficients {
        CondCirCoefficients {
            species: 0,
            a_tilde: self.alpha * self.beta,
            b_tilde: self.beta,
            r_in: vec![0],
            c_in: vec![self.sigma],
            r_out: vec![],
            c_out: vec![],
        }
    }
}

/// Draws `X(t + h)` given `X(t) = x` from the scaled noncentral chi-square
/// transition law, as a Poisson mixture of central chi-squares.
pub fn cir_exact_sample<R: Rng + ?Sized>(p: &CirParams, x: f64, h: f64, rng: &mut R) -> Result<f64> {
    p.validate()?;
    if !(x >= 0.0 && x.is_finite()) || !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("need x >= 0 and h > 0, got x = {x}, h = {h}")));
    }
    let e = (-p.beta * h).exp();
    let c = p.sigma * p.sigma * -(-p.beta * h).exp_m1() / (4.0 * p.beta);
    let dof = 4.0 * p.alpha * p.beta / (p.sigma * p.sigma);
    let lambda = x * e / c;
    let n = if lambda > 0.0 {
        Poisson::new(0.5 * lambda).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng)
    } else {
        0.0
    };
    let shape = 0.5 * dof + n;
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng);
    Ok(c * 2.0 * g)
}

/// Jump times and post-jump states of an SSA realization. `states[0]` is the
/// initial state at `times[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SsaPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub t_end: f64,
}

impl SsaPath {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t);
        &self.states[k.saturating_sub(1)]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("path has an initial state")
    }
}

/// Gillespie's direct method on `[0, t_end]`.
pub fn gillespie_ssa<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    x0: &[f64],
    theta: &[f64],
    t_end: f64,
    rng: &mut R,
) -> Result<SsaPath> {
    net.check_state(x0)?;
    net.check_params(theta)?;
    if x0.iter().any(|v| v.fract() != 0.0) {
        return Err(Error::Domain(format!("SSA needs integer copy numbers, got {x0:?}")));
    }
    let r = net.n_reactions();
    let mut props = vec![0.0; r];
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut path = SsaPath { times: vec![0.0], states: vec![x.clone()], t_end };
    loop {
        net.fill_propensities(&x, theta, &mut props);
        let total: f64 = props.iter().sum();
        if total <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if t + wait > t_end {
            break;
        }
        t += wait;
        let mut u = rng.random::<f64>() * total;
        let mut j = props.iter().rposition(|a| *a > 0.0).unwrap_or(r - 1);
        for (k, a) in props.iter().enumerate() {
            if u < *a {
                j = k;
                break;
            }
            u -= a;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += net.nu(i, j);
        }
        path.times.push(t);
        path.states.push(x.clone());
    }
    Ok(path)
}
