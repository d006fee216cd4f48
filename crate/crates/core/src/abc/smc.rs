use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obs::GaussianDensity;
use crate::stats;

/// Independent uniform prior on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub names: Vec<String>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl PriorSpec {
    pub fn new(names: Vec<String>, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if names.len() != low.len() || low.len() != high.len() || low.is_empty() {
            return Err(Error::Config("prior names and bounds must have equal nonzero length".into()));
        }
        for (k, (a, b)) in low.iter().zip(&high).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!("prior component {} needs low < high, got ({a}, {b})", names[k])));
            }
        }
        Ok(Self { names, low, high })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(&self.low).zip(&self.high).all(|((t, a), b)| *a <= *t && *t <= *b)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self.low.iter().zip(&self.high).map(|(a, b)| (b - a).ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()
    }
}

/// Weighted parameter particles of one ABC-SMC round.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    pub round: usize,
    pub thetas: Vec<Vec<f64>>,
    /// Normalized weights.
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    /// Acceptance threshold of the round (`inf` in round 1).
    pub epsilon: f64,
    /// Perturbation covariance that generated the proposals (`None` for
    /// prior draws).
    pub proposal_cov: Option<DMatrix<f64>>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        weighted_mean(&self.thetas, &self.weights)
    }

    /// `2 x` the weighted covariance of the particles.
    pub fn perturbation_cov(&self) -> DMatrix<f64> {
        weighted_cov(&self.thetas, &self.weights) * 2.0
    }

    pub fn ess(&self) -> f64 {
        stats::ess(&self.weights)
    }

    /// Central weighted credible interval of component `k`.
    pub fn credible_interval(&self, k: usize, level: f64) -> (f64, f64) {
        let xs: Vec<f64> = self.thetas.iter().map(|t| t[k]).collect();
        let tail = 0.5 * (1.0 - level);
        (stats::weighted_quantile(&xs, &self.weights, tail), stats::weighted_quantile(&xs, &self.weights, 1.0 - tail))
    }
}

pub fn weighted_mean(thetas: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let p = thetas.first().map_or(0, Vec::len);
    let total: f64 = w.iter().sum();
    (0..p).map(|k| thetas.iter().zip(w).map(|(t, wi)| wi * t[k]).sum::<f64>() / total).collect()
}

/// Weighted covariance `sum w_i (t_i - m)(t_i - m)^T` with normalized weights.
pub fn weighted_cov(thetas: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    let p = thetas.first().map_or(0, Vec::len);
    let m = weighted_mean(thetas, w);
    let total: f64 = w.iter().sum();
    let mut cov = DMatrix::zeros(p, p);
    for (t, wi) in thetas.iter().zip(w) {
        let d = DVector::from_iterator(p, t.iter().zip(&m).map(|(a, b)| a - b));
        cov += (&d * d.transpose()) * (wi / total);
    }
    cov
}

/// Gaussian perturbation kernel `N(theta*, Sigma_r)` around particles of the
/// previous cloud, with ancestors drawn proportionally to their weights.
#[derive(Clone, Debug)]
pub struct Perturbation {
    thetas: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    zero_mean: GaussianDensity,
}

/// Cap on re-proposals of a single particle before the ancestor is kept.
pub const MAX_PRIOR_REJECTIONS: u64 = 100_000;

impl Perturbation {
    pub fn new(cloud: &ParticleCloud) -> Result<Self> {
        Self::with_cov(cloud, cloud.perturbation_cov())
    }

    pub fn with_cov(cloud: &ParticleCloud, cov: DMatrix<f64>) -> Result<Self> {
        let p = cloud.dim();
        let mut jittered = cov.clone();
        let base = 1e-10 * (1.0 + cov.diagonal().amax());
        let mut jitter = 0.0;
        let chol = loop {
            if let Some(c) = jittered.clone().cholesky() {
                break c;
            }
            jitter = if jitter == 0.0 { base } else { jitter * 10.0 };
            if jitter > 1e6 * (1.0 + cov.diagonal().amax()) {
                return Err(Error::Numeric("perturbation covariance cannot be regularized".into()));
            }
            jittered = &cov + DMatrix::identity(p, p) * jitter;
        };
        let factor = chol.l();
        let zero_mean = GaussianDensity::new(vec![0.0; p], jittered.clone())?;
        let total: f64 = cloud.weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = cloud
            .weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self {
            thetas: cloud.thetas.clone(),
            log_weights: cloud.weights.iter().map(|w| (w / total).ln()).collect(),
            cumulative,
            cov: jittered,
            factor,
            zero_mean,
        })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn ancestor<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u).min(self.thetas.len() - 1)
    }

    /// Ancestor plus Gaussian noise, redrawn until inside the prior. Returns
    /// the proposal and the number of rejected draws.
    pub fn propose<R: Rng + ?Sized>(&self, prior: &PriorSpec, rng: &mut R) -> (Vec<f64>, u64) {
        let p = self.factor.nrows();
        let mut z = DVector::zeros(p);
        for rejections in 0..MAX_PRIOR_REJECTIONS {
            let a = &self.thetas[self.ancestor(rng)];
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let step = &self.factor * &z;
            let theta: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            if prior.contains(&theta) {
                return (theta, rejections);
            }
        }
        (self.thetas[self.ancestor(rng)].clone(), MAX_PRIOR_REJECTIONS)
    }

    /// `log sum_j w_j phi(theta | theta_j, Sigma)`.
    pub fn log_mixture_density(&self, theta: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .thetas
            .iter()
            .zip(&self.log_weights)
            .map(|(t, lw)| {
                let d: Vec<f64> = theta.iter().zip(t).map(|(a, b)| a - b).collect();
                lw + self.zero_mean.log_density(&d).expect("dimension checked at construction")
            })
            .collect();
        stats::logsumexp(&terms)
    }
}

/// Empirical mean and covariance of forward and data-conditional summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLikelihoodStats {
    pub mu_fwd: Vec<f64>,
    pub cov_fwd: DMatrix<f64>,
    pub mu_dc: Vec<f64>,
    pub cov_dc: DMatrix<f64>,
}

/// Sample mean and unbiased covariance plus `COV_JITTER * I`.
pub fn mean_and_cov(samples: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return Err(Error::Config("synthetic likelihood needs at least two samples".into()));
    }
    let p = samples[0].len();
    let n = samples.len() as f64;
    let mu: Vec<f64> = (0..p).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(p, p);
    for s in samples {
        let d = DVector::from_iterator(p, s.iter().zip(&mu).map(|(a, b)| a - b));
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    cov += DMatrix::identity(p, p) * crate::obs::COV_JITTER;
    Ok((mu, cov))
}

pub fn synthetic_likelihood_stats(fwd: &[Vec<f64>], dc: &[Vec<f64>]) -> Result<SyntheticLikelihoodStats> {
    let (mu_fwd, cov_fwd) = mean_and_cov(fwd)?;
    let (mu_dc, cov_dc) = mean_and_cov(dc)?;
    Ok(SyntheticLikelihoodStats { mu_fwd, cov_fwd, mu_dc, cov_dc })
}

impl SyntheticLikelihoodStats {
    /// `log phi(s | mu_fwd, cov_fwd) - log phi(s | mu_dc, cov_dc)`.
    pub fn log_ratio(&self, s: &[f64]) -> Result<f64> {
        let num = GaussianDensity::new(self.mu_fwd.clone(), self.cov_fwd.clone())?.log_density(s)?;
        let den = GaussianDensity::new(self.mu_dc.clone(), self.cov_dc.clone())?.log_density(s)?;
        Ok(num - den)
    }
}

/// `log pi(theta) - log sum_j w_j phi(theta | theta_j, Sigma)`; without a
/// previous kernel (round 1) only the prior term remains up to a constant,
/// which is dropped.
pub fn smc_log_weight(theta: &[f64], prior: &PriorSpec, prev: Option<&Perturbation>) -> f64 {
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    match prev {
        Some(k) => lp - k.log_mixture_density(theta),
        None => 0.0,
    }
}

pub fn smc_particle_weight(theta: &[f64], prior: &PriorSpec, prev: Option<&Perturbation>) -> f64 {
    smc_log_weight(theta, prior, prev).exp()
}

/// Forward-only weight times the synthetic-likelihood ratio at `s_dc`.
pub fn dc_log_weight(
    theta: &[f64],
    s_dc: &[f64],
    prior: &PriorSpec,
    prev: Option<&Perturbation>,
    stats: &SyntheticLikelihoodStats,
) -> Result<f64> {
    let base = smc_log_weight(theta, prior, prev);
    if base == f64::NEG_INFINITY {
        return Ok(base);
    }
    Ok(base + stats.log_ratio(s_dc)?)
}

pub fn dc_particle_weight(
    theta: &[f64],
    s_dc: &[f64],
    prior: &PriorSpec,
    prev: Option<&Perturbation>,
    stats: &SyntheticLikelihoodStats,
) -> Result<f64> {
    Ok(dc_log_weight(theta, s_dc, prior, prev, stats)?.exp())
}

/// Normalizes log weights. Returns uniform weights and `true` when no
/// weight is positive and finite.
pub fn normalize_log_weights(log_w: &[f64]) -> (Vec<f64>, bool) {
    let lse = stats::logsumexp(log_w);
    if !lse.is_finite() {
        let n = log_w.len();
        return (vec![1.0 / n as f64; n], true);
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| if l.is_nan() { 0.0 } else { (l - lse).exp() }).collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    (w, false)
}

/// Next tolerance: the `alpha` quantile (linear interpolation) of distances.
pub fn epsilon_update(distances: &[f64], alpha: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::Config("no distances to take a quantile of".into()));
    }
    Ok(stats::quantile(distances, alpha))
}

/// Draws an index with probability proportional to `exp(log_w)`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}
