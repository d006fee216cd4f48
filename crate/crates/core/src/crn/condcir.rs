//! Perturbed conditionally-CIR decomposition of a species' CLE.
//!
//! With every other species frozen, species `i` follows
//! `dX = (a - b X) dt + (sum_{R_i} c_j dW_j) sqrt(X) + sum_{R_-i} c_j dW_j`
//! where `R_i` holds the reactions whose propensity is linear in `X_i` and
//! `R_-i` the reactions that change `X_i` without depending on it.

use super::{ReactionNetwork, SpeciesDegree};
use crate::error::{Error, Result};

/// Frozen-coordinate coefficients for one species.
#[derive(Clone, Debug, PartialEq)]
pub struct CondCirCoefficients {
    pub species: usize,
    pub a_tilde: f64,
    pub b_tilde: f64,
    /// `R_i` and the matching `c~_{i,j}`.
    pub r_in: Vec<usize>,
    pub c_in: Vec<f64>,
    /// `R_-i` and the matching `c~_{i,j}`.
    pub r_out: Vec<usize>,
    pub c_out: Vec<f64>,
}

impl CondCirCoefficients {
    /// `c~_{i,j}`; zero for reactions in neither index set.
    pub fn c_tilde(&self, j: usize) -> f64 {
        self.r_in
            .iter()
            .position(|&k| k == j)
            .map(|p| self.c_in[p])
            .or_else(|| self.r_out.iter().position(|&k| k == j).map(|p| self.c_out[p]))
            .unwrap_or(0.0)
    }

    /// `sum_{j in R_i} c~_{i,j}^2`.
    pub fn sum_c2_in(&self) -> f64 {
        self.c_in.iter().map(|c| c * c).sum()
    }

    pub fn sum_c2_out(&self) -> f64 {
        self.c_out.iter().map(|c| c * c).sum()
    }

    /// Drift `a - b x` of the frozen-coordinate SDE.
    pub fn drift(&self, x: f64) -> f64 {
        self.a_tilde - self.b_tilde * x
    }
}

/// A reaction that changes species `i`, with its stoichiometry and whether
/// its propensity carries the species.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CondCirTerm {
    pub reaction: usize,
    pub nu: f64,
    pub linear: bool,
}

/// Precomputed index sets for every species of a conditionally-CIR network.
#[derive(Clone, Debug)]
pub struct CondCirPlan {
    terms: Vec<Vec<CondCirTerm>>,
}

impl CondCirPlan {
    pub fn new(net: &ReactionNetwork) -> Result<Self> {
        let terms = (0..net.n_species())
            .map(|i| species_terms(net, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    pub fn terms(&self, species: usize) -> &[CondCirTerm] {
        &self.terms[species]
    }

    /// Fills `(a~, b~)` and writes `c~_{i,j}` into `c[j]` for the reactions of
    /// species `i` (other entries of `c` are left untouched).
    #[inline]
    pub fn coefficients_into(
        &self,
        net: &ReactionNetwork,
        x: &[f64],
        theta: &[f64],
        species: usize,
        c: &mut [f64],
    ) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for t in &self.terms[species] {
            let stripped = net.propensity(t.reaction).eval_stripped(x, theta, species).max(0.0);
            if t.linear {
                b -= t.nu * stripped;
            } else {
                a += t.nu * stripped;
            }
            c[t.reaction] = t.nu * stripped.sqrt();
        }
        (a, b)
    }
}

fn species_terms(net: &ReactionNetwork, i: usize) -> Result<Vec<CondCirTerm>> {
    (0..net.n_reactions())
        .filter(|&j| net.nu(i, j) != 0.0)
        .map(|j| match net.propensity(j).degree_in(i) {
            SpeciesDegree::Absent => Ok(CondCirTerm { reaction: j, nu: net.nu(i, j), linear: false }),
            SpeciesDegree::Linear => Ok(CondCirTerm { reaction: j, nu: net.nu(i, j), linear: true }),
            SpeciesDegree::NonAffine => Err(Error::NotConditionallyCir { species: i, reaction: j }),
        })
        .collect()
}

/// Derives `(a~_i, b~_i, c~_{i,.})` and the index sets `R_i`, `R_-i` with all
/// species other than `i` frozen at `x_frozen`.
pub fn cond_cir_coefficients(
    net: &ReactionNetwork,
    x_frozen: &[f64],
    theta: &[f64],
    species: usize,
) -> Result<CondCirCoefficients> {
    net.check_state(x_frozen)?;
    net.check_params(theta)?;
    if species >= net.n_species() {
        return Err(Error::Config(format!("species index {species} out of range")));
    }
    let terms = species_terms(net, species)?;
    let mut out = CondCirCoefficients {
        species,
        a_tilde: 0.0,
        b_tilde: 0.0,
        r_in: vec![],
        c_in: vec![],
        r_out: vec![],
        c_out: vec![],
    };
    for t in terms {
        let stripped = net.propensity(t.reaction).eval_stripped(x_frozen, theta, species);
        let c = t.nu * stripped.sqrt();
        if t.linear {
            out.b_tilde -= t.nu * stripped;
            out.r_in.push(t.reaction);
            out.c_in.push(c);
        } else {
            out.a_tilde += t.nu * stripped;
            out.r_out.push(t.reaction);
            out.c_out.push(c);
        }
    }
    Ok(out)
}
