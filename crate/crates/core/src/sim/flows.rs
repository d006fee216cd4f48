//! Exact sub-flows of the conditionally-CIR splitting.
//!
//! For a frozen-coordinate species the SDE is split into the additive
//! perturbation `dX = sum_{R_-i} c dW` and a CIR-type part. The CIR part is
//! Lamperti-transformed (`z = sqrt(x)`) and split again into a Bernoulli ODE
//! and a constant-coefficient Brownian motion; each piece is solved exactly.

use crate::crn::CondCirCoefficients;

/// Threshold under which `b~` is treated as zero in the Bernoulli flow.
pub const B_TILDE_EPS: f64 = 1e-10;

/// Clamp events raised by one conditionally-CIR component update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClampFlags {
    /// The perturbation flow went negative before the Lamperti map.
    pub perturbation: bool,
    /// The Bernoulli-flow radicand was negative (complex solution).
    pub radicand: bool,
}

impl ClampFlags {
    pub fn count(&self) -> u64 {
        self.perturbation as u64 + self.radicand as u64
    }
}

/// Exact flow of `dz = (-b/2 z + (a/2 - s/8)/z) dt` over time `h`, where
/// `s = sum_{R_i} c~^2`. Returns `(0, true)` when the squared solution is
/// negative.
#[inline]
pub fn bernoulli_flow_raw(z: f64, a: f64, b: f64, sum_c2: f64, h: f64) -> (f64, bool) {
    let k = a - 0.25 * sum_c2;
    let u = if b.abs() < B_TILDE_EPS {
        z * z + k * h
    } else {
        // z^2 e^{-bh} + k (1 - e^{-bh}) / b, written with expm1 for small bh.
        let em1 = (-b * h).exp_m1();
        z * z * (1.0 + em1) - k * em1 / b
    };
    if u < 0.0 {
        (0.0, true)
    } else {
        (u.sqrt(), false)
    }
}

/// Bernoulli ODE flow of the Lamperti-transformed CIR part.
pub fn bernoulli_flow(z: f64, coeffs: &CondCirCoefficients, h: f64) -> (f64, bool) {
    bernoulli_flow_raw(z, coeffs.a_tilde, coeffs.b_tilde, coeffs.sum_c2_in(), h)
}

/// `z + 1/2 sum_{R_i} c~_j dW_j`; `increments` is aligned with `coeffs.r_in`.
pub fn brownian_flow(z: f64, coeffs: &CondCirCoefficients, increments: &[f64]) -> f64 {
    debug_assert_eq!(increments.len(), coeffs.c_in.len());
    z + 0.5 * coeffs.c_in.iter().zip(increments).map(|(c, w)| c * w).sum::<f64>()
}

/// `x + sum_{R_-i} c~_j dW_j`; `increments` is aligned with `coeffs.r_out`.
pub fn perturbation_flow(x: f64, coeffs: &CondCirCoefficients, increments: &[f64]) -> f64 {
    debug_assert_eq!(increments.len(), coeffs.c_out.len());
    x + coeffs.c_out.iter().zip(increments).map(|(c, w)| c * w).sum::<f64>()
}

/// One component update `((brownian o bernoulli)(sqrt(perturbation(x))))^2`.
/// A negative perturbation result is mapped to `sqrt(0)`.
pub fn cir_component_step(
    x: f64,
    coeffs: &CondCirCoefficients,
    h: f64,
    increments_in: &[f64],
    increments_out: &[f64],
) -> (f64, ClampFlags) {
    let mut flags = ClampFlags::default();
    let y = perturbation_flow(x, coeffs, increments_out);
    let z0 = if y < 0.0 {
        flags.perturbation = true;
        0.0
    } else {
        y.sqrt()
    };
    let (z1, clamped) = bernoulli_flow(z0, coeffs, h);
    flags.radicand = clamped;
    let z2 = brownian_flow(z1, coeffs, increments_in);
    (z2 * z2, flags)
}

/// Update of `dx = (s - g x) dt + sqrt(s + g x) dW` through the merged
/// variable `v = g x + s`, which is CIR with `a~ = 2 g s`, `b~ = g` and
/// `sigma = g`. Used when the species' noises are not shared with any other
/// species and can be merged into a single Brownian motion.
#[inline]
pub(crate) fn merged_noise_flow(x: f64, rate: f64, offset: f64, h: f64, dw: f64, clamps: &mut u64) -> f64 {
    if rate == 0.0 {
        let y = x + offset * h + offset.max(0.0).sqrt() * dw;
        if y < 0.0 {
            *clamps += 1;
            return 0.0;
        }
        return y;
    }
    let z = (rate * x + offset).max(0.0).sqrt();
    let (z, clamped) = bernoulli_flow_raw(z, 2.0 * rate * offset, rate, rate * rate, h);
    *clamps += clamped as u64;
    let z = z + 0.5 * rate * dw;
    let v = (z * z - offset) / rate;
    if v < 0.0 {
        *clamps += 1;
        0.0
    } else {
        v
    }
}
