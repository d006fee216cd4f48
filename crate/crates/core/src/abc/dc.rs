use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::problem::{InferenceProblem, NoiseSpec};
use super::smc::{normalize_log_weights, sample_categorical};
use crate::crn::{cle_diffusion_columns, cle_drift};
use crate::error::{Error, Result};
use crate::obs::GaussianDensity;
use crate::rng;
use crate::sim::{simulate_observed, Stepper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DcMode {
    /// Particles carry simulated measurement noise; weights use the
    /// observation density with covariance inflated by `C`.
    Noisy,
    /// Particles are exact projections; weights use a one-step Euler
    /// transition from the state one fine step before each observation.
    Noiseless,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DcConfig {
    pub p_particles: usize,
    pub c_scale: f64,
    /// Defaults to noisy when the problem has measurement error.
    #[serde(default)]
    pub mode: Option<DcMode>,
}

impl DcConfig {
    pub fn new(p_particles: usize, c_scale: f64) -> Self {
        Self { p_particles, c_scale, mode: None }
    }

    pub fn resolved_mode(&self, problem: &InferenceProblem) -> DcMode {
        self.mode.unwrap_or(if problem.noise == NoiseSpec::None { DcMode::Noiseless } else { DcMode::Noisy })
    }

    /// Requirements for use inside ABC-SMC: `P >= 2` for the synthetic
    /// likelihood covariances and `C >= 1`.
    pub fn validate(&self, problem: &InferenceProblem) -> Result<()> {
        if self.p_particles < 2 {
            return Err(Error::Config("synthetic likelihood needs at least two path particles".into()));
        }
        if !(self.c_scale >= 1.0 && self.c_scale.is_finite()) {
            return Err(Error::Config("weight covariance scale must be at least 1".into()));
        }
        self.check_mode(problem)
    }

    fn check_mode(&self, problem: &InferenceProblem) -> Result<()> {
        if self.resolved_mode(problem) == DcMode::Noisy && problem.noise == NoiseSpec::None {
            return Err(Error::Config("noisy weighting needs a measurement-error model".into()));
        }
        Ok(())
    }
}

/// `P` forward paths with their per-time normalized weights against the data.
#[derive(Clone, Debug)]
pub struct DcSample {
    pub d_o: usize,
    pub n: usize,
    /// `P` simulated observation paths, each `n x d_o`.
    pub forward: Vec<Vec<f64>>,
    /// `n` rows of `P` normalized weights.
    pub weights: Vec<Vec<f64>>,
    /// Times at which no particle had positive weight and uniform weights
    /// were used instead.
    pub degenerate_times: usize,
    pub clamp_events: u64,
    pub diverged_paths: usize,
}

impl DcSample {
    /// One data-conditional path: at every time, the record of a particle
    /// drawn by weight.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.d_o;
        let mut out = Vec::with_capacity(self.n * k);
        for (i, w) in self.weights.iter().enumerate() {
            let j = sample_categorical(w, rng);
            out.extend_from_slice(&self.forward[j][i * k..(i + 1) * k]);
        }
        out
    }

    /// Index of the forward path closest to `y` in Euclidean norm.
    pub fn closest_forward(&self, y: &[f64]) -> Option<usize> {
        self.forward
            .iter()
            .enumerate()
            .map(|(j, f)| (j, f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .filter(|(_, d)| d.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }
}

type PathRun = (Vec<f64>, Vec<f64>, u64, bool);

/// Runs `P` forward paths for `theta` and weights each one at every
/// observation time against the data. Path `j` uses the stream
/// `(seed, task..., 1, j)`.
pub fn data_conditional_sample(
    problem: &InferenceProblem,
    theta: &[f64],
    cfg: &DcConfig,
    seed: u64,
    task: &[u64],
) -> Result<DcSample> {
    if cfg.p_particles == 0 || !(cfg.c_scale > 0.0 && cfg.c_scale.is_finite()) {
        return Err(Error::Config("need at least one path particle and a positive covariance scale".into()));
    }
    cfg.check_mode(problem)?;
    let (full, sigma) = problem.expand(theta);
    let model = problem.obs_model(sigma)?;
    let mode = cfg.resolved_mode(problem);
    let d = problem.net.n_species();
    let k = problem.d_o();
    let n = problem.grid.n();
    let h = problem.grid.h();
    let y_obs = &problem.observed;
    let noisy_density = match (mode, model.noise()) {
        (DcMode::Noisy, Some(s)) => Some(GaussianDensity::new(vec![0.0; k], s * cfg.c_scale)?),
        _ => None,
    };

    // (observations, pre-observation states, clamps, diverged) per path
    let runs: Vec<Result<PathRun>> = (0..cfg.p_particles as u64)
        .into_par_iter()
        .map(|j| {
            let mut idx = task.to_vec();
            idx.extend([1, j]);
            let mut r = rng::stream(seed, &idx);
            let mut stepper = Stepper::new(&problem.net, &full, &problem.scheme)?;
            let run = simulate_observed(&mut stepper, &problem.x0, &problem.grid, &mut r);
            let y = match mode {
                DcMode::Noisy => model.observe_states(&run.obs[d..], &mut r),
                DcMode::Noiseless => model.with_noise(None)?.observe_states(&run.obs[d..], &mut r),
            };
            let mut lw = Vec::with_capacity(n);
            for i in 0..n {
                let yi = &y[i * k..(i + 1) * k];
                let oi = &y_obs[i * k..(i + 1) * k];
                let v = if yi.iter().any(|v| !v.is_finite()) {
                    f64::NEG_INFINITY
                } else {
                    match &noisy_density {
                        Some(g) => {
                            let diff: Vec<f64> = oi.iter().zip(yi).map(|(a, b)| a - b).collect();
                            g.log_density(&diff)?
                        }
                        None => {
                            euler_log_weight(problem, &model, &full, &run.pre_obs[i * d..(i + 1) * d], oi, h, cfg.c_scale)
                        }
                    }
                };
                lw.push(v);
            }
            Ok((y, lw, run.clamp_events, run.diverged))
        })
        .collect();

    let mut forward = Vec::with_capacity(cfg.p_particles);
    let mut log_w = Vec::with_capacity(cfg.p_particles);
    let mut clamp_events = 0;
    let mut diverged_paths = 0;
    for r in runs {
        let (y, lw, c, div) = r?;
        forward.push(y);
        log_w.push(lw);
        clamp_events += c;
        diverged_paths += usize::from(div);
    }
    let mut weights = Vec::with_capacity(n);
    let mut degenerate_times = 0;
    for i in 0..n {
        let col: Vec<f64> = log_w.iter().map(|lw| lw[i]).collect();
        let (w, fallback) = normalize_log_weights(&col);
        degenerate_times += usize::from(fallback);
        weights.push(w);
    }
    Ok(DcSample { d_o: k, n, forward, weights, degenerate_times, clamp_events, diverged_paths })
}

/// `log phi(y | L(x + mu(x) h), C L D(x) L^T h)` for the state `x` one fine
/// step before the observation.
fn euler_log_weight(
    problem: &InferenceProblem,
    model: &crate::obs::ObservationModel,
    theta: &[f64],
    x: &[f64],
    y: &[f64],
    h: f64,
    c: f64,
) -> f64 {
    let eval = || -> Result<f64> {
        let mu = cle_drift(&problem.net, x, theta)?;
        let g = cle_diffusion_columns(&problem.net, x, theta)?;
        let sel = model.selection();
        let mean: Vec<f64> = sel.iter().map(|&i| x[i] + mu[i] * h).collect();
        let gl = DMatrix::from_fn(sel.len(), g.ncols(), |a, j| g[(sel[a], j)]);
        let cov = &gl * gl.transpose() * (h * c);
        GaussianDensity::new(mean, cov)?.log_density(y)
    };
    eval().unwrap_or(f64::NEG_INFINITY)
}
