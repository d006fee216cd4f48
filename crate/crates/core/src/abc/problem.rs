use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::smc::PriorSpec;
use crate::crn::ReactionNetwork;
use crate::error::{Error, Result};
use crate::obs::{Dataset, ObservationModel};
use crate::sim::{simulate_observed, ObservedRun, SchemeConfig, Stepper, TimeGrid};

/// How the measurement-error standard deviation enters inference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum NoiseSpec {
    /// Exact observations.
    None,
    Known(f64),
    /// Estimated; the last component of the inferred vector.
    Estimated,
}

/// Everything needed to simulate observations for a candidate parameter.
#[derive(Clone, Debug)]
pub struct InferenceProblem {
    pub net: ReactionNetwork,
    pub scheme: SchemeConfig,
    pub x0: Vec<f64>,
    pub grid: TimeGrid,
    pub selection: Vec<usize>,
    pub noise: NoiseSpec,
    /// Full network parameter vector; entries listed in `free` are replaced.
    pub theta_base: Vec<f64>,
    pub free: Vec<usize>,
    pub prior: PriorSpec,
    /// Observed records at `t_1..t_n`, row-major `n x d_o`.
    pub observed: Vec<f64>,
}

/// A simulated observation path for one parameter.
#[derive(Clone, Debug)]
pub struct ForwardSample {
    /// `n x d_o` simulated observations at `t_1..t_n`.
    pub y: Vec<f64>,
    pub run: ObservedRun,
}

impl InferenceProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: ReactionNetwork,
        scheme: SchemeConfig,
        x0: Vec<f64>,
        grid: TimeGrid,
        selection: Vec<usize>,
        noise: NoiseSpec,
        theta_base: Vec<f64>,
        free: Vec<usize>,
        prior: PriorSpec,
        data: &Dataset,
    ) -> Result<Self> {
        net.check_state(&x0)?;
        net.check_params(&theta_base)?;
        if free.iter().any(|&k| k >= theta_base.len()) {
            return Err(Error::Config("free parameter index out of range".into()));
        }
        let p = free.len() + usize::from(noise == NoiseSpec::Estimated);
        if prior.dim() != p {
            return Err(Error::Config(format!("prior has {} components, problem has {p}", prior.dim())));
        }
        if data.n_times() != grid.n() + 1 || data.d_o() != selection.len() {
            return Err(Error::Config(format!(
                "dataset is {} x {}, expected {} x {}",
                data.n_times(),
                data.d_o(),
                grid.n() + 1,
                selection.len()
            )));
        }
        if let NoiseSpec::Known(s) = noise {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("known measurement sd must be positive".into()));
            }
        }
        let problem = Self {
            net,
            scheme,
            x0,
            grid,
            selection,
            noise,
            theta_base,
            free,
            prior,
            observed: data.after_initial().to_vec(),
        };
        problem.obs_model(None)?;
        Stepper::new(&problem.net, &problem.theta_base, &problem.scheme)?;
        Ok(problem)
    }

    pub fn p(&self) -> usize {
        self.prior.dim()
    }

    pub fn d_o(&self) -> usize {
        self.selection.len()
    }

    /// Full network parameters and measurement sd for inferred vector `theta`.
    pub fn expand(&self, theta: &[f64]) -> (Vec<f64>, Option<f64>) {
        let mut full = self.theta_base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = theta[k];
        }
        let sigma = match self.noise {
            NoiseSpec::None => None,
            NoiseSpec::Known(s) => Some(s),
            NoiseSpec::Estimated => Some(theta[self.free.len()]),
        };
        (full, sigma)
    }

    pub fn obs_model(&self, sigma: Option<f64>) -> Result<ObservationModel> {
        let k = self.selection.len();
        let noise = match (self.noise, sigma) {
            (NoiseSpec::None, _) => None,
            (NoiseSpec::Known(s), _) => Some(DMatrix::identity(k, k) * (s * s)),
            (NoiseSpec::Estimated, Some(s)) => Some(DMatrix::identity(k, k) * (s * s).max(crate::obs::COV_JITTER)),
            (NoiseSpec::Estimated, None) => Some(DMatrix::identity(k, k)),
        };
        ObservationModel::new(self.net.n_species(), self.selection.clone(), noise)
    }

    /// One path through the scheme, observed with measurement noise at
    /// `t_1..t_n`. The noise is drawn from `rng` after the path.
    pub fn forward<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<ForwardSample> {
        let (full, sigma) = self.expand(theta);
        let model = self.obs_model(sigma)?;
        let mut stepper = Stepper::new(&self.net, &full, &self.scheme)?;
        let run = simulate_observed(&mut stepper, &self.x0, &self.grid, rng);
        let d = self.net.n_species();
        let y = model.observe_states(&run.obs[d..], rng);
        Ok(ForwardSample { y, run })
    }
}
