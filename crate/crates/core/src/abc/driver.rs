use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dc::{data_conditional_sample, DcConfig};
use super::problem::InferenceProblem;
use super::smc::{
    dc_log_weight, epsilon_update, normalize_log_weights, smc_log_weight, synthetic_likelihood_stats, ParticleCloud,
    Perturbation,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::summaries::{distance, mad_scale, SummaryModel, SummaryStatistic, TrainingStore, DEFAULT_RIDGE};

const PRETRAIN_TAG: u64 = 0x5052_4554;
const PROPOSAL_TAG: u64 = 0x5052_4f50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcSettings {
    pub m_particles: usize,
    pub max_rounds: usize,
    /// Quantile of the previous round's distances used as the next tolerance.
    pub alpha: f64,
    /// A round stops, and the run with it, once this acceptance rate can no
    /// longer be reached.
    pub min_acceptance: f64,
    /// Prior-predictive pairs used to fit the first summary statistic.
    pub pretrain: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for AbcSettings {
    fn default() -> Self {
        Self { m_particles: 500, max_rounds: 20, alpha: 0.5, min_acceptance: 0.015, pretrain: 2000, ridge: DEFAULT_RIDGE, seed: 0 }
    }
}

impl AbcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.m_particles < 2 || self.max_rounds == 0 {
            return Err(Error::Config("need at least two particles and one round".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if !(self.min_acceptance > 0.0 && self.min_acceptance <= 1.0) {
            return Err(Error::Config("minimum acceptance rate must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Proposal attempts after which the acceptance floor is out of reach.
    pub fn max_attempts(&self) -> u64 {
        (self.m_particles as f64 / self.min_acceptance).ceil() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Algorithm {
    Forward,
    DataConditional(DcConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Forward => "abc-smc",
            Algorithm::DataConditional(_) => "abc-smc-dc",
        }
    }

    fn paths_per_call(&self) -> u64 {
        match self {
            Algorithm::Forward => 1,
            Algorithm::DataConditional(c) => c.p_particles as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxRounds,
    LowAcceptance,
    EpsilonStalled,
}

/// Per-round counters. Simulator calls count one per proposal attempt
/// (a forward simulation or one data-conditional sampling call); paths and
/// fine steps count every simulated path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub epsilon: f64,
    pub completed: bool,
    pub accepted: usize,
    pub attempts: u64,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub simulator_calls: u64,
    pub cumulative_simulator_calls: u64,
    pub paths: u64,
    pub cumulative_paths: u64,
    pub fine_steps: u64,
    pub clamp_events: u64,
    pub prior_rejections: u64,
    pub degenerate_weight_events: u64,
    pub summary_retrained: bool,
    pub training_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pretraining {
    pub pairs: usize,
    pub simulator_calls: u64,
    pub fine_steps: u64,
}

/// Serializable record of a run. Wall-clock times are kept out of it so that
/// the same seed reproduces it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcReport {
    pub algorithm: Algorithm,
    pub parameters: Vec<String>,
    pub settings: AbcSettings,
    pub pretraining: Pretraining,
    pub rounds: Vec<RoundDiagnostics>,
    pub stop_reason: StopReason,
}

#[derive(Clone, Debug)]
pub struct AbcRun {
    pub report: AbcReport,
    pub clouds: Vec<ParticleCloud>,
    pub summary: SummaryModel,
    /// Frozen distance scale.
    pub scale: Vec<f64>,
    pub round_seconds: Vec<f64>,
}

impl AbcRun {
    pub fn final_cloud(&self) -> &ParticleCloud {
        self.clouds.last().expect("a run has at least one cloud")
    }

    pub fn write_diagnostics<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.report)?;
        writeln!(w)?;
        Ok(())
    }

    /// Cumulative simulator calls when the first round with tolerance at or
    /// below `eps` completed.
    pub fn calls_to_reach(&self, eps: f64) -> Option<u64> {
        self.report.rounds.iter().find(|r| r.completed && r.epsilon <= eps).map(|r| r.cumulative_simulator_calls)
    }
}

/// Writes a cloud as CSV with columns `<names>, weight, distance`.
pub fn write_cloud_csv<W: Write>(cloud: &ParticleCloud, names: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = names.to_vec();
    header.extend(["weight".to_string(), "distance".to_string()]);
    w.write_record(&header)?;
    for ((t, wt), d) in cloud.thetas.iter().zip(&cloud.weights).zip(&cloud.distances) {
        let mut rec: Vec<String> = t.iter().map(|v| v.to_string()).collect();
        rec.push(wt.to_string());
        rec.push(d.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Pretrained {
    store: TrainingStore,
    model: SummaryModel,
    scale: Vec<f64>,
    info: Pretraining,
}

fn pretrain(problem: &InferenceProblem, settings: &AbcSettings) -> Result<Pretrained> {
    let samples: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..settings.pretrain as u64)
        .into_par_iter()
        .map(|g| {
            let theta = problem.prior.sample(&mut rng::stream(settings.seed, &[PRETRAIN_TAG, g, 0]));
            let f = problem.forward(&theta, &mut rng::stream(settings.seed, &[PRETRAIN_TAG, g, 1]))?;
            Ok((f.y, theta))
        })
        .collect();
    let mut store = TrainingStore::new(problem.d_o(), problem.p());
    for s in samples {
        let (y, theta) = s?;
        if y.iter().all(|v| v.is_finite()) {
            store.push(y, theta)?;
        }
    }
    let model = SummaryModel::fit(&store, settings.ridge)?;
    let summaries: Vec<Vec<f64>> = store.pairs().map(|(y, _)| model.summarize(y)).collect();
    let scale = mad_scale(&summaries);
    let info = Pretraining {
        pairs: store.len(),
        simulator_calls: settings.pretrain as u64,
        fine_steps: settings.pretrain as u64 * problem.grid.n_steps() as u64,
    };
    Ok(Pretrained { store, model, scale, info })
}

/// Outcome of one proposal attempt.
struct Proposal {
    theta: Vec<f64>,
    distance: f64,
    accepted: bool,
    log_weight: f64,
    /// Path added to the training store on acceptance.
    store_path: Option<Vec<f64>>,
    rejections: u64,
    clamps: u64,
    degenerate: u64,
}

struct RoundContext<'a> {
    problem: &'a InferenceProblem,
    algorithm: Algorithm,
    seed: u64,
    round: usize,
    epsilon: f64,
    summary: &'a SummaryModel,
    s_obs: Vec<f64>,
    scale: &'a [f64],
    kernel: Option<&'a Perturbation>,
}

impl RoundContext<'_> {
    fn propose(&self, attempt: u64) -> Result<Proposal> {
        let base = [PROPOSAL_TAG, self.round as u64, attempt];
        let mut r = rng::stream(self.seed, &[base[0], base[1], base[2], 0]);
        let (theta, rejections) = match self.kernel {
            None => (self.problem.prior.sample(&mut r), 0),
            Some(k) => k.propose(&self.problem.prior, &mut r),
        };
        match self.algorithm {
            Algorithm::Forward => {
                let f = self.problem.forward(&theta, &mut rng::stream(self.seed, &[base[0], base[1], base[2], 1, 0]))?;
                let s = self.summary.summarize(&f.y);
                let distance = distance(&s, &self.s_obs, self.scale);
                let accepted = distance < self.epsilon;
                let log_weight = if accepted { smc_log_weight(&theta, &self.problem.prior, self.kernel) } else { 0.0 };
                Ok(Proposal {
                    theta,
                    distance,
                    accepted,
                    log_weight,
                    store_path: accepted.then_some(f.y),
                    rejections,
                    clamps: f.run.clamp_events,
                    degenerate: 0,
                })
            }
            Algorithm::DataConditional(cfg) => {
                let sample = data_conditional_sample(self.problem, &theta, &cfg, self.seed, &base)?;
                let mut cat = rng::stream(self.seed, &[base[0], base[1], base[2], 2]);
                let y_dc = sample.resample(&mut cat);
                let s_dc = self.summary.summarize(&y_dc);
                let distance = distance(&s_dc, &self.s_obs, self.scale);
                let accepted = distance < self.epsilon;
                let mut log_weight = 0.0;
                let mut store_path = None;
                if accepted {
                    let fwd: Vec<Vec<f64>> = sample.forward.iter().map(|y| self.summary.summarize(y)).collect();
                    let dc: Vec<Vec<f64>> =
                        (0..cfg.p_particles).map(|_| self.summary.summarize(&sample.resample(&mut cat))).collect();
                    log_weight = if cfg.p_particles >= 2 && fwd.iter().flatten().all(|v| v.is_finite()) {
                        let stats = synthetic_likelihood_stats(&fwd, &dc)?;
                        dc_log_weight(&theta, &s_dc, &self.problem.prior, self.kernel, &stats)?
                    } else {
                        smc_log_weight(&theta, &self.problem.prior, self.kernel)
                    };
                    store_path = sample.closest_forward(&self.problem.observed).map(|j| sample.forward[j].clone());
                }
                Ok(Proposal {
                    theta,
                    distance,
                    accepted,
                    log_weight,
                    store_path,
                    rejections,
                    clamps: sample.clamp_events,
                    degenerate: sample.degenerate_times as u64,
                })
            }
        }
    }
}

/// Forward-only ABC-SMC: one simulated path per proposal.
pub fn run_abc_smc(problem: &InferenceProblem, settings: &AbcSettings) -> Result<AbcRun> {
    run(problem, settings, Algorithm::Forward)
}

/// ABC-SMC with data-conditional path sampling and synthetic-likelihood
/// weight correction.
pub fn run_abc_smc_dc(problem: &InferenceProblem, settings: &AbcSettings, dc: &DcConfig) -> Result<AbcRun> {
    dc.validate(problem)?;
    run(problem, settings, Algorithm::DataConditional(*dc))
}

pub fn run(problem: &InferenceProblem, settings: &AbcSettings, algorithm: Algorithm) -> Result<AbcRun> {
    settings.validate()?;
    let Pretrained { mut store, model: mut summary, scale, info } = pretrain(problem, settings)?;
    let m = settings.m_particles;
    let cap = settings.max_attempts();
    let steps_per_path = problem.grid.n_steps() as u64;
    let mut clouds: Vec<ParticleCloud> = Vec::new();
    let mut rounds: Vec<RoundDiagnostics> = Vec::new();
    let mut round_seconds = Vec::new();
    let mut cumulative_calls = 0u64;
    let mut cumulative_paths = 0u64;
    let mut stop = StopReason::MaxRounds;
    let mut last_rate = 1.0f64;

    for round in 1..=settings.max_rounds {
        let start = Instant::now();
        let (epsilon, kernel, retrained) = match clouds.last() {
            None => (f64::INFINITY, None, false),
            Some(prev) => {
                let eps = epsilon_update(&prev.distances, settings.alpha)?;
                if eps >= prev.epsilon {
                    stop = StopReason::EpsilonStalled;
                    break;
                }
                let retrained = summary.retrain(&store)?;
                (eps, Some(Perturbation::new(prev)?), retrained)
            }
        };
        let ctx = RoundContext {
            problem,
            algorithm,
            seed: settings.seed,
            round,
            epsilon,
            summary: &summary,
            s_obs: summary.summarize(&problem.observed),
            scale: &scale,
            kernel: kernel.as_ref(),
        };

        let mut accepted: Vec<Proposal> = Vec::with_capacity(m);
        let mut attempts = 0u64;
        let (mut clamps, mut rejections, mut degenerate) = (0u64, 0u64, 0u64);
        let mut next = 0u64;
        while accepted.len() < m && next < cap {
            let need = (m - accepted.len()) as f64;
            let rate = if attempts > 0 && !accepted.is_empty() { accepted.len() as f64 / attempts as f64 } else { last_rate };
            let batch = ((need / rate.max(settings.min_acceptance) * 1.1).ceil() as u64).max(16).min(cap - next);
            let results: Vec<Result<Proposal>> = (next..next + batch).into_par_iter().map(|a| ctx.propose(a)).collect();
            next += batch;
            for r in results {
                let p = r?;
                attempts += 1;
                clamps += p.clamps;
                rejections += p.rejections;
                degenerate += p.degenerate;
                if p.accepted {
                    accepted.push(p);
                    if accepted.len() == m {
                        break;
                    }
                }
            }
        }
        let completed = accepted.len() == m;
        let calls = attempts;
        let paths = attempts * algorithm.paths_per_call();
        cumulative_calls += calls;
        cumulative_paths += paths;
        let rate = accepted.len() as f64 / attempts.max(1) as f64;
        last_rate = rate.max(settings.min_acceptance);

        let mut ess = f64::NAN;
        if completed {
            let log_w: Vec<f64> = accepted.iter().map(|p| p.log_weight).collect();
            let (weights, fallback) = normalize_log_weights(&log_w);
            degenerate += u64::from(fallback);
            for p in &mut accepted {
                if let Some(path) = p.store_path.take() {
                    if path.iter().all(|v| v.is_finite()) {
                        store.push(path, p.theta.clone())?;
                    }
                }
            }
            let cloud = ParticleCloud {
                round,
                thetas: accepted.iter().map(|p| p.theta.clone()).collect(),
                weights,
                distances: accepted.iter().map(|p| p.distance).collect(),
                epsilon,
                proposal_cov: kernel.as_ref().map(|k| k.cov().clone()),
            };
            ess = cloud.ess();
            clouds.push(cloud);
        }
        rounds.push(RoundDiagnostics {
            round,
            epsilon,
            completed,
            accepted: accepted.len(),
            attempts,
            acceptance_rate: rate,
            ess,
            simulator_calls: calls,
            cumulative_simulator_calls: cumulative_calls,
            paths,
            cumulative_paths,
            fine_steps: paths * steps_per_path,
            clamp_events: clamps,
            prior_rejections: rejections,
            degenerate_weight_events: degenerate,
            summary_retrained: retrained,
            training_pairs: store.len(),
        });
        round_seconds.push(start.elapsed().as_secs_f64());
        if !completed {
            stop = StopReason::LowAcceptance;
            break;
        }
    }
    if clouds.is_empty() {
        return Err(Error::Invariant("the first round did not produce a particle cloud".into()));
    }
    Ok(AbcRun {
        report: AbcReport {
            algorithm,
            parameters: problem.prior.names.clone(),
            settings: settings.clone(),
            pretraining: info,
            rounds,
            stop_reason: stop,
        },
        clouds,
        summary,
        scale,
        round_seconds,
    })
}
