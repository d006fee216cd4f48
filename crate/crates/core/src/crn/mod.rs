//! Chemical reaction networks and their chemical Langevin equation.
//!
//! A [`ReactionNetwork`] holds the stoichiometry and a symbolic description
//! of every propensity. Keeping propensities symbolic (rather than opaque
//! closures) lets [`cond_cir_coefficients`] derive the per-species
//! conditionally-CIR decomposition mechanically for any network in the class.

mod condcir;
mod models;

pub use condcir::{cond_cir_coefficients, CondCirCoefficients, CondCirPlan, CondCirTerm};
pub use models::{
    lotka_volterra, repressilator, two_pool, LV_THETA, REPRESSILATOR_THETA, REPRESSILATOR_X0,
    TWO_POOL_THETA,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbolic propensity of one reaction. Indices refer into the parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensitySpec {
    /// `theta[rate] * prod_i binom(x_i, orders[i])`, total order at most 2.
    MassAction { rate: usize, orders: Vec<u32> },
    /// `basal + amplitude * K^n / (K^n + P^n)` with `P = x[repressor]`.
    Hill {
        basal: usize,
        amplitude: usize,
        half_saturation: usize,
        exponent: usize,
        repressor: usize,
    },
    /// State-independent rate `theta[rate]`.
    Constant { rate: usize },
}

/// How a propensity depends on one species.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeciesDegree {
    Absent,
    Linear,
    /// Quadratic mass action or a Hill function of the species itself.
    NonAffine,
}

#[inline]
fn falling_binomial(x: f64, order: u32) -> f64 {
    match order {
        0 => 1.0,
        1 => x,
        // x(x-1)/2 is negative for x in (0, 1); propensities must stay >= 0.
        2 => (0.5 * x * (x - 1.0)).max(0.0),
        _ => unreachable!("mass-action order > 2 rejected at construction"),
    }
}

impl PropensitySpec {
    /// Evaluates the propensity without validation.
    #[inline]
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        match self {
            PropensitySpec::MassAction { rate, orders } => orders
                .iter()
                .zip(x)
                .fold(theta[*rate], |acc, (&o, &xi)| acc * falling_binomial(xi, o)),
            PropensitySpec::Hill { basal, amplitude, half_saturation, exponent, repressor } => {
                let ratio = x[*repressor].max(0.0) / theta[*half_saturation];
                theta[*basal] + theta[*amplitude] / (1.0 + ratio.powf(theta[*exponent]))
            }
            PropensitySpec::Constant { rate } => theta[*rate],
        }
    }

    pub fn degree_in(&self, species: usize) -> SpeciesDegree {
        match self {
            PropensitySpec::MassAction { orders, .. } => match orders[species] {
                0 => SpeciesDegree::Absent,
                1 => SpeciesDegree::Linear,
                _ => SpeciesDegree::NonAffine,
            },
            PropensitySpec::Hill { repressor, .. } if *repressor == species => SpeciesDegree::NonAffine,
            _ => SpeciesDegree::Absent,
        }
    }

    /// The propensity with the (linear) factor `x[species]` removed, i.e.
    /// `a_j(x_{-i})`. For propensities not involving the species this is the
    /// full propensity. Callers must have checked [`Self::degree_in`].
    #[inline]
    pub fn eval_stripped(&self, x: &[f64], theta: &[f64], species: usize) -> f64 {
        match self {
            PropensitySpec::MassAction { rate, orders } => orders
                .iter()
                .zip(x)
                .enumerate()
                .filter(|(k, _)| *k != species)
                .fold(theta[*rate], |acc, (_, (&o, &xk))| acc * falling_binomial(xk, o)),
            _ => self.eval(x, theta),
        }
    }

    fn param_indices(&self) -> Vec<usize> {
        match self {
            PropensitySpec::MassAction { rate, .. } | PropensitySpec::Constant { rate } => vec![*rate],
            PropensitySpec::Hill { basal, amplitude, half_saturation, exponent, .. } => {
                vec![*basal, *amplitude, *half_saturation, *exponent]
            }
        }
    }
}

/// One reaction as written in a network definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub nu_minus: Vec<u32>,
    pub nu_plus: Vec<u32>,
    pub propensity: PropensitySpec,
}

/// A chemical reaction network: `d` species, `r` reactions, stoichiometry
/// `nu = nu_plus - nu_minus` and one propensity per reaction.
#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    params: Vec<String>,
    reactions: Vec<Reaction>,
    /// Row-major d x r.
    nu: Vec<f64>,
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>, params: Vec<String>, reactions: Vec<Reaction>) -> Result<Self> {
        let d = species.len();
        let r = reactions.len();
        if d == 0 {
            return Err(Error::Config("network has no species".into()));
        }
        let mut nu = vec![0.0; d * r];
        for (j, rx) in reactions.iter().enumerate() {
            if rx.nu_minus.len() != d || rx.nu_plus.len() != d {
                return Err(Error::Config(format!(
                    "reaction {j}: stoichiometry vectors must have length {d}"
                )));
            }
            for i in 0..d {
                nu[i * r + j] = rx.nu_plus[i] as f64 - rx.nu_minus[i] as f64;
            }
            match &rx.propensity {
                PropensitySpec::MassAction { orders, .. } => {
                    if orders.len() != d {
                        return Err(Error::Config(format!("reaction {j}: order vector must have length {d}")));
                    }
                    if orders.iter().sum::<u32>() > 2 {
                        return Err(Error::Config(format!("reaction {j}: total mass-action order exceeds 2")));
                    }
                }
                PropensitySpec::Hill { repressor, .. } if *repressor >= d => {
                    return Err(Error::Config(format!("reaction {j}: repressor index {repressor} out of range")));
                }
                _ => {}
            }
            if let Some(&bad) = rx.propensity.param_indices().iter().find(|&&k| k >= params.len()) {
                return Err(Error::Config(format!("reaction {j}: parameter index {bad} out of range")));
            }
        }
        Ok(Self { species, params, reactions, nu })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn species_labels(&self) -> &[String] {
        &self.species
    }

    pub fn param_names(&self) -> &[String] {
        &self.params
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn propensity(&self, j: usize) -> &PropensitySpec {
        &self.reactions[j].propensity
    }

    /// Stoichiometric coefficient `nu_{i,j}`.
    #[inline]
    pub fn nu(&self, i: usize, j: usize) -> f64 {
        self.nu[i * self.reactions.len() + j]
    }

    /// `nu` as a d x r matrix.
    pub fn stoichiometry(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_species(), self.n_reactions(), &self.nu)
    }

    pub fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                theta.len()
            )));
        }
        if let Some(k) = theta.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!("parameter {} = {} must be finite and >= 0", self.params[k], theta[k])));
        }
        Ok(())
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_species() {
            return Err(Error::Config(format!("expected state of length {}, got {}", self.n_species(), x.len())));
        }
        if let Some(i) = x.iter().position(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Domain(format!("species {} has negative or NaN level {}", self.species[i], x[i])));
        }
        Ok(())
    }

    /// Writes all propensities into `out` without validation.
    #[inline]
    pub fn fill_propensities(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        for (a, rx) in out.iter_mut().zip(&self.reactions) {
            *a = rx.propensity.eval(x, theta);
        }
    }

    /// Writes `nu a(x)` into `out` without validation.
    #[inline]
    pub fn fill_drift(&self, props: &[f64], out: &mut [f64]) {
        let r = self.n_reactions();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.nu[i * r..(i + 1) * r].iter().zip(props).map(|(n, a)| n * a).sum();
        }
    }

    /// Loads a network from its JSON definition.
    pub fn from_json(text: &str) -> Result<Self> {
        let def: NetworkDef = serde_json::from_str(text)?;
        def.build()
    }

    pub fn to_json(&self) -> Result<String> {
        let def = NetworkDef {
            species: self.species.clone(),
            parameters: Some(self.params.clone()),
            reactions: self
                .reactions
                .iter()
                .map(|rx| ReactionDef {
                    nu_minus: rx.nu_minus.clone(),
                    nu_plus: rx.nu_plus.clone(),
                    propensity: match &rx.propensity {
                        PropensitySpec::MassAction { rate, orders } => PropensityDef::MassAction {
                            rate: *rate,
                            orders: Some(orders.clone()),
                        },
                        PropensitySpec::Hill { basal, amplitude, half_saturation, exponent, repressor } => {
                            PropensityDef::Hill {
                                basal: *basal,
                                amplitude: *amplitude,
                                half_saturation: *half_saturation,
                                exponent: *exponent,
                                repressor: *repressor,
                            }
                        }
                        PropensitySpec::Constant { rate } => PropensityDef::Constant { rate: *rate },
                    },
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&def)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDef {
    species: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<Vec<String>>,
    reactions: Vec<ReactionDef>,
}

#[derive(Serialize, Deserialize)]
struct ReactionDef {
    nu_minus: Vec<u32>,
    nu_plus: Vec<u32>,
    propensity: PropensityDef,
}

/// JSON form of a propensity; mass-action orders default to `nu_minus`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PropensityDef {
    MassAction {
        rate: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orders: Option<Vec<u32>>,
    },
    Hill { basal: usize, amplitude: usize, half_saturation: usize, exponent: usize, repressor: usize },
    Constant { rate: usize },
}

impl NetworkDef {
    fn build(self) -> Result<ReactionNetwork> {
        let mut max_param = 0usize;
        let reactions: Vec<Reaction> = self
            .reactions
            .into_iter()
            .map(|rd| {
                let propensity = match rd.propensity {
                    PropensityDef::MassAction { rate, orders } => PropensitySpec::MassAction {
                        rate,
                        orders: orders.unwrap_or_else(|| rd.nu_minus.clone()),
                    },
                    PropensityDef::Hill { basal, amplitude, half_saturation, exponent, repressor } => {
                        PropensitySpec::Hill { basal, amplitude, half_saturation, exponent, repressor }
                    }
                    PropensityDef::Constant { rate } => PropensitySpec::Constant { rate },
                };
                max_param = propensity.param_indices().into_iter().fold(max_param, |m, k| m.max(k + 1));
                Reaction { nu_minus: rd.nu_minus, nu_plus: rd.nu_plus, propensity }
            })
            .collect();
        let params = self
            .parameters
            .unwrap_or_else(|| (1..=max_param).map(|k| format!("theta_{k}")).collect());
        ReactionNetwork::new(self.species, params, reactions)
    }
}

/// Propensities `a_j(x)` for all reactions.
pub fn evaluate_propensities(net: &ReactionNetwork, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    net.check_state(x)?;
    net.check_params(theta)?;
    let mut a = vec![0.0; net.n_reactions()];
    net.fill_propensities(x, theta, &mut a);
    Ok(a)
}

/// CLE drift `nu a(x)`.
pub fn cle_drift(net: &ReactionNetwork, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let a = evaluate_propensities(net, x, theta)?;
    let mut out = vec![0.0; net.n_species()];
    net.fill_drift(&a, &mut out);
    Ok(out)
}

/// The d x r matrix with entries `nu_{i,j} sqrt(a_j(x))`.
pub fn cle_diffusion_columns(net: &ReactionNetwork, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
    let a = evaluate_propensities(net, x, theta)?;
    if let Some(j) = a.iter().position(|v| *v < 0.0 || v.is_nan()) {
        return Err(Error::Invariant(format!("propensity {j} evaluated to {}", a[j])));
    }
    Ok(DMatrix::from_fn(net.n_species(), net.n_reactions(), |i, j| net.nu(i, j) * a[j].sqrt()))
}
