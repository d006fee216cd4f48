use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ode::{check_blocks, cond_linear_apply, default_blocks, rk4_apply, Rk4Scratch};
use super::steps::{
    eum_apply, fill_lv_strang_noise, fill_normals, fill_repressilator_noise, generic_apply, lv_lie_trotter_apply,
    lv_strang_apply, repressilator_apply, twopool_apply, NegativityPolicy, LV_STRANG_NOISES, REPRESSILATOR_NOISES,
};
use crate::crn::{self, CondCirPlan, ReactionNetwork};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    EumTruncate,
    EumAbs,
    #[serde(alias = "split-generic")]
    SplitGenericLieTrotter,
    SplitRepressilatorStrang,
    SplitLvStrang,
    SplitLvLieTrotter,
    SplitTwoPoolLieTrotter,
    OdeCondLinearStrang,
    Rk4,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 9] = [
        SchemeKind::EumTruncate,
        SchemeKind::EumAbs,
        SchemeKind::SplitGenericLieTrotter,
        SchemeKind::SplitRepressilatorStrang,
        SchemeKind::SplitLvStrang,
        SchemeKind::SplitLvLieTrotter,
        SchemeKind::SplitTwoPoolLieTrotter,
        SchemeKind::OdeCondLinearStrang,
        SchemeKind::Rk4,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::EumTruncate => "eum-truncate",
            SchemeKind::EumAbs => "eum-abs",
            SchemeKind::SplitGenericLieTrotter => "split-generic-lie-trotter",
            SchemeKind::SplitRepressilatorStrang => "split-repressilator-strang",
            SchemeKind::SplitLvStrang => "split-lv-strang",
            SchemeKind::SplitLvLieTrotter => "split-lv-lie-trotter",
            SchemeKind::SplitTwoPoolLieTrotter => "split-two-pool-lie-trotter",
            SchemeKind::OdeCondLinearStrang => "ode-cond-linear-strang",
            SchemeKind::Rk4 => "rk4",
        }
    }

    pub fn is_splitting(&self) -> bool {
        matches!(
            self,
            SchemeKind::SplitGenericLieTrotter
                | SchemeKind::SplitRepressilatorStrang
                | SchemeKind::SplitLvStrang
                | SchemeKind::SplitLvLieTrotter
                | SchemeKind::SplitTwoPoolLieTrotter
        )
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, SchemeKind::OdeCondLinearStrang | SchemeKind::Rk4)
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or((s == "split-generic").then_some(SchemeKind::SplitGenericLieTrotter))
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    #[serde(default)]
    pub seed: u64,
    /// Gauss–Seidel sweep order for the generic splitting (0-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_update_order: Option<Vec<usize>>,
    /// Block partition for the conditionally-linear ODE splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, seed: u64) -> Self {
        Self { kind, seed, species_update_order: None, blocks: None }
    }
}

/// Result of one step: clamp events and whether the new state is finite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub clamps: u64,
    pub finite: bool,
}

/// A scheme bound to a network and parameter vector, with its scratch space.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    net: &'a ReactionNetwork,
    theta: &'a [f64],
    kind: SchemeKind,
    plan: Option<CondCirPlan>,
    order: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    props: Vec<f64>,
    c: Vec<f64>,
    dw: Vec<f64>,
    rk4: Option<Rk4Scratch>,
}

fn require_model(net: &ReactionNetwork, kind: SchemeKind, expected: ReactionNetwork, name: &str) -> Result<()> {
    if *net != expected {
        return Err(Error::Config(format!("scheme {kind} requires the built-in {name} network")));
    }
    Ok(())
}

impl<'a> Stepper<'a> {
    pub fn new(net: &'a ReactionNetwork, theta: &'a [f64], config: &SchemeConfig) -> Result<Self> {
        net.check_params(theta)?;
        let d = net.n_species();
        let r = net.n_reactions();
        let kind = config.kind;
        let mut plan = None;
        let mut order: Vec<usize> = (0..d).collect();
        let mut blocks = vec![];
        let n_noise = match kind {
            SchemeKind::EumTruncate | SchemeKind::EumAbs => r,
            SchemeKind::SplitGenericLieTrotter => {
                plan = Some(CondCirPlan::new(net)?);
                if let Some(o) = &config.species_update_order {
                    let mut sorted = o.clone();
                    sorted.sort_unstable();
                    if sorted != order {
                        return Err(Error::Config(format!("species update order {o:?} is not a permutation of 0..{d}")));
                    }
                    order = o.clone();
                }
                r
            }
            SchemeKind::SplitRepressilatorStrang => {
                require_model(net, kind, crn::repressilator(), "Repressilator")?;
                REPRESSILATOR_NOISES
            }
            SchemeKind::SplitLvStrang => {
                require_model(net, kind, crn::lotka_volterra(), "Lotka-Volterra")?;
                LV_STRANG_NOISES
            }
            SchemeKind::SplitLvLieTrotter => {
                require_model(net, kind, crn::lotka_volterra(), "Lotka-Volterra")?;
                3
            }
            SchemeKind::SplitTwoPoolLieTrotter => {
                require_model(net, kind, crn::two_pool(), "two-pool")?;
                4
            }
            SchemeKind::OdeCondLinearStrang => {
                plan = Some(
                    CondCirPlan::new(net).map_err(|e| Error::Domain(format!("drift is not conditionally linear: {e}")))?,
                );
                blocks = config.blocks.clone().unwrap_or_else(|| default_blocks(net));
                check_blocks(&blocks, d)?;
                0
            }
            SchemeKind::Rk4 => 0,
        };
        if config.species_update_order.is_some() && kind != SchemeKind::SplitGenericLieTrotter {
            return Err(Error::Config(format!("species_update_order only applies to the generic splitting, not {kind}")));
        }
        Ok(Self {
            net,
            theta,
            kind,
            plan,
            order,
            blocks,
            props: vec![0.0; r],
            c: vec![0.0; r],
            dw: vec![0.0; n_noise],
            rk4: (kind == SchemeKind::Rk4).then(|| Rk4Scratch::new(d, r)),
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn net(&self) -> &ReactionNetwork {
        self.net
    }

    pub fn theta(&self) -> &[f64] {
        self.theta
    }

    /// Gaussian increments consumed per step.
    pub fn noise_len(&self) -> usize {
        self.dw.len()
    }

    /// Advances `x` by `h`, drawing increments from `rng`.
    pub fn step<R: Rng + ?Sized>(&mut self, x: &mut [f64], h: f64, rng: &mut R) -> StepOutcome {
        match self.kind {
            SchemeKind::SplitRepressilatorStrang => fill_repressilator_noise(rng, h, &mut self.dw),
            SchemeKind::SplitLvStrang => fill_lv_strang_noise(rng, h, &mut self.dw),
            _ => fill_normals(rng, h.sqrt(), &mut self.dw),
        }
        self.apply(x, h)
    }

    /// Advances `x` by `h` with explicit increments (see the kernel docs for layouts).
    pub fn step_with(&mut self, x: &mut [f64], h: f64, dw: &[f64]) -> Result<StepOutcome> {
        if dw.len() != self.dw.len() {
            return Err(Error::Config(format!("expected {} increments, got {}", self.dw.len(), dw.len())));
        }
        self.dw.copy_from_slice(dw);
        Ok(self.apply(x, h))
    }

    fn apply(&mut self, x: &mut [f64], h: f64) -> StepOutcome {
        let (net, theta, dw) = (self.net, self.theta, &self.dw);
        let clamps = match self.kind {
            SchemeKind::EumTruncate | SchemeKind::EumAbs => {
                let policy =
                    if self.kind == SchemeKind::EumAbs { NegativityPolicy::Abs } else { NegativityPolicy::Truncate };
                let (clamps, finite) = eum_apply(net, x, theta, h, dw, policy, &mut self.props);
                return StepOutcome { clamps, finite };
            }
            SchemeKind::SplitGenericLieTrotter => {
                let plan = self.plan.as_ref().expect("plan built for generic splitting");
                generic_apply(net, plan, x, theta, h, &self.order, dw, &mut self.c)
            }
            SchemeKind::SplitRepressilatorStrang => repressilator_apply(x, theta, h, dw),
            SchemeKind::SplitLvStrang => lv_strang_apply(x, theta, h, dw),
            SchemeKind::SplitLvLieTrotter => lv_lie_trotter_apply(x, theta, h, dw),
            SchemeKind::SplitTwoPoolLieTrotter => twopool_apply(x, theta, h, dw),
            SchemeKind::OdeCondLinearStrang => {
                let plan = self.plan.as_ref().expect("plan built for ODE splitting");
                cond_linear_apply(net, plan, x, theta, h, &self.blocks, &mut self.c);
                0
            }
            SchemeKind::Rk4 => {
                rk4_apply(net, x, theta, h, self.rk4.as_mut().expect("rk4 scratch"));
                0
            }
        };
        StepOutcome { clamps, finite: x.iter().all(|v| v.is_finite()) }
    }
}
