//! Experiment configuration: TOML or JSON, with `[scale.paper]` and
//! `[scale.desk]` tables merged over the base document.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clesplit::crn::{self, ReactionNetwork};
use clesplit::sim::{SchemeKind, TimeGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn key(&self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Repressilator,
    LotkaVolterra,
    TwoPool,
}

impl ModelId {
    pub fn network(&self) -> ReactionNetwork {
        match self {
            ModelId::Repressilator => crn::repressilator(),
            ModelId::LotkaVolterra => crn::lotka_volterra(),
            ModelId::TwoPool => crn::two_pool(),
        }
    }

    pub fn default_theta(&self) -> Vec<f64> {
        match self {
            ModelId::Repressilator => crn::REPRESSILATOR_THETA.to_vec(),
            ModelId::LotkaVolterra => crn::LV_THETA.to_vec(),
            ModelId::TwoPool => crn::TWO_POOL_THETA.to_vec(),
        }
    }

    pub fn default_x0(&self) -> Vec<f64> {
        match self {
            ModelId::Repressilator => crn::REPRESSILATOR_X0.to_vec(),
            ModelId::LotkaVolterra => vec![100.0, 100.0],
            ModelId::TwoPool => vec![100.0, 0.0],
        }
    }

    pub fn default_scheme(&self) -> SchemeKind {
        match self {
            ModelId::Repressilator => SchemeKind::SplitRepressilatorStrang,
            ModelId::LotkaVolterra => SchemeKind::SplitLvStrang,
            ModelId::TwoPool => SchemeKind::SplitTwoPoolLieTrotter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t0: f64,
    pub n: usize,
    pub delta: f64,
    pub a_sub: usize,
}

impl GridSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.t0, self.n, self.delta, self.a_sub)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    /// 0-based observed species.
    pub selection: Vec<usize>,
    #[serde(default)]
    pub sigma_err: Option<f64>,
    /// Treat the measurement sd as an unknown, inferred last.
    #[serde(default)]
    pub estimate_sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub paths: usize,
    pub resolution: clesplit::sim::Resolution,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { paths: 1, resolution: clesplit::sim::Resolution::Observation }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistPreserveSpec {
    /// 0-based species whose end-time law is compared.
    pub component: usize,
    pub times: Vec<f64>,
    pub h_values: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    pub reference_scheme: SchemeKind,
    pub reference_h: f64,
    pub paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePortraitSpec {
    pub h_values: Vec<f64>,
    pub t_end: f64,
    pub paths: usize,
    pub schemes: Vec<SchemeKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    AbcSmc,
    AbcSmcDc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSpec {
    /// Indices into the model parameter vector that are inferred.
    pub free: Vec<usize>,
    pub prior_low: Vec<f64>,
    pub prior_high: Vec<f64>,
    pub m_particles: usize,
    pub max_rounds: usize,
    pub pretrain: usize,
    pub p_particles: usize,
    pub c_scale: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_floor")]
    pub min_acceptance: f64,
    pub algorithms: Vec<AlgorithmId>,
    /// One dataset and one pair of runs per seed.
    pub seeds: Vec<u64>,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_floor() -> f64 {
    0.015
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSpec {
    pub cir_paths: usize,
    pub cir_h: f64,
    pub bernoulli_points: usize,
    pub ssa_paths: usize,
    pub ssa_t: f64,
    pub identity_cases: usize,
    /// Multiplies the Bernoulli flow's decay constant; anything but 1 is a
    /// deliberately broken integrator used as a negative control.
    pub corrupt_flow_factor: f64,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self {
            cir_paths: 20_000,
            cir_h: 0.01,
            bernoulli_points: 1000,
            ssa_paths: 2000,
            ssa_t: 10.0,
            identity_cases: 10_000,
            corrupt_flow_factor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub scheme: Option<SchemeKind>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub observation: Option<ObservationSpec>,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub dist_preserve: Option<DistPreserveSpec>,
    #[serde(default)]
    pub phase_portrait: Option<PhasePortraitSpec>,
    #[serde(default)]
    pub infer: Option<InferSpec>,
    #[serde(default)]
    pub validate: ValidateSpec,
}

impl ExperimentConfig {
    pub fn theta(&self) -> Vec<f64> {
        self.theta.clone().unwrap_or_else(|| self.model.default_theta())
    }

    pub fn x0(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| self.model.default_x0())
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme.unwrap_or_else(|| self.model.default_scheme())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        self.grid.as_ref().context("config has no [grid] section")?.grid()
    }

    /// Checks that every referenced index and vector resolves against the
    /// model's species and parameter lists.
    pub fn validate(&self) -> Result<()> {
        let net = self.model.network();
        let (d, np) = (net.n_species(), net.n_params());
        if self.theta().len() != np {
            bail!("theta has {} entries, {:?} has {np} parameters", self.theta().len(), self.model);
        }
        if self.x0().len() != d {
            bail!("x0 has {} entries, {:?} has {d} species", self.x0().len(), self.model);
        }
        if let Some(o) = &self.observation {
            if o.selection.is_empty() || o.selection.iter().any(|&i| i >= d) {
                bail!("observation selection {:?} does not resolve against {d} species", o.selection);
            }
            if o.estimate_sigma && self.infer.is_none() {
                bail!("estimate_sigma needs an [infer] section");
            }
        }
        if let Some(s) = &self.dist_preserve {
            if s.component >= d {
                bail!("dist_preserve.component {} out of range", s.component);
            }
        }
        if let Some(i) = &self.infer {
            if i.free.iter().any(|&k| k >= np) {
                bail!("infer.free {:?} does not resolve against {np} parameters", i.free);
            }
            let extra = usize::from(self.observation.as_ref().is_some_and(|o| o.estimate_sigma));
            if i.prior_low.len() != i.free.len() + extra || i.prior_high.len() != i.prior_low.len() {
                bail!("prior bounds need {} entries", i.free.len() + extra);
            }
            if self.observation.is_none() {
                bail!("[infer] needs an [observation] section");
            }
        }
        Ok(())
    }
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a config document, applying the overrides for `scale`.
pub fn parse(text: &str, json: bool, scale: Scale) -> Result<ExperimentConfig> {
    let mut doc: Value = if json { serde_json::from_str(text)? } else { toml::from_str(text)? };
    let scales = doc.as_object_mut().and_then(|o| o.remove("scale"));
    if let Some(Value::Object(mut s)) = scales {
        if let Some(over) = s.remove(scale.key()) {
            merge(&mut doc, over);
        }
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc).context("invalid experiment config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path, scale: Scale) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse(&text, json, scale).with_context(|| format!("in {}", path.display()))
}
