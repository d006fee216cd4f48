//! Experiment drivers behind the `simulate`, `dist-preserve`,
//! `phase-portrait` and `infer` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clesplit::abc::{
    run_abc_smc, run_abc_smc_dc, write_cloud_csv, AbcRun, AbcSettings, DcConfig, InferenceProblem, NoiseSpec,
    PriorSpec,
};
use clesplit::obs::{observe, Dataset, ObservationModel, Provenance};
use clesplit::rng;
use clesplit::sim::{
    path_rng, simulate_observed, simulate_path_indexed, RunSummary, SchemeConfig, SchemeKind, Stepper, TimeGrid,
};
use clesplit::stats::ks_two_sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AlgorithmId, ExperimentConfig};

const OBS_TAG: u64 = 0x4f42_5356;
const DIST_TAG: u64 = 0x4449_5354;
const PHASE_TAG: u64 = 0x5048_4153;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn observation_model(cfg: &ExperimentConfig) -> Result<Option<ObservationModel>> {
    let d = cfg.model.network().n_species();
    cfg.observation
        .as_ref()
        .map(|o| Ok(ObservationModel::with_sigma(d, o.selection.clone(), o.sigma_err)?))
        .transpose()
}

/// Simulates `cfg.simulate.paths` paths and, when an observation model is
/// configured, their noisy observations. Writes `trajectory_<k>.csv`,
/// `observed_<k>.csv` and `summary.json`.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunSummary>> {
    fs::create_dir_all(out)?;
    let net = cfg.model.network();
    let theta = cfg.theta();
    let x0 = cfg.x0();
    let grid = cfg.grid()?;
    let scheme = SchemeConfig::new(cfg.scheme(), cfg.seed);
    let model = observation_model(cfg)?;
    let trajs: Vec<_> = (0..cfg.simulate.paths as u64)
        .into_par_iter()
        .map(|k| simulate_path_indexed(&net, &scheme, &x0, &theta, &grid, k))
        .collect::<clesplit::Result<_>>()?;
    let mut summaries = Vec::with_capacity(trajs.len());
    for (k, traj) in trajs.iter().enumerate() {
        traj.write_csv(create(&out.join(format!("trajectory_{k:04}.csv")))?, cfg.simulate.resolution)?;
        if let Some(m) = &model {
            let mut ds = observe(traj, m, &mut rng::stream(cfg.seed, &[OBS_TAG, k as u64]))?;
            ds.provenance = Some(provenance(cfg, &theta));
            ds.save(&out.join(format!("observed_{k:04}")))?;
        }
        summaries.push(RunSummary::new(&scheme, k as u64, traj));
    }
    write_json(&out.join("summary.json"), &summaries)?;
    Ok(summaries)
}

fn provenance(cfg: &ExperimentConfig, theta: &[f64]) -> Provenance {
    Provenance {
        seed: cfg.seed,
        theta_true: theta.to_vec(),
        scheme: cfg.scheme().name().into(),
        sigma_err: cfg.observation.as_ref().and_then(|o| o.sigma_err),
    }
}

/// Synthetic dataset for inference: path 0 of `seed` observed with noise.
pub fn synthetic_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let net = cfg.model.network();
    let theta = cfg.theta();
    let scheme = SchemeConfig::new(cfg.scheme(), seed);
    let traj = simulate_path_indexed(&net, &scheme, &cfg.x0(), &theta, &cfg.grid()?, 0)?;
    let model = observation_model(cfg)?.context("inference needs an [observation] section")?;
    let mut ds = observe(&traj, &model, &mut rng::stream(seed, &[OBS_TAG, 0]))?;
    ds.provenance = Some(Provenance { seed, ..provenance(cfg, &theta) });
    Ok(ds)
}

/// Values of `component` at each of `times` for `paths` paths. `times` must
/// be multiples of the first entry and of `h`.
#[allow(clippy::too_many_arguments)]
pub fn end_time_samples(
    cfg: &ExperimentConfig,
    kind: SchemeKind,
    h: f64,
    times: &[f64],
    component: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let net = cfg.model.network();
    let theta = cfg.theta();
    let x0 = cfg.x0();
    let delta = times[0];
    let a = (delta / h).round() as usize;
    if a == 0 || ((a as f64) * h - delta).abs() > 1e-9 * delta {
        bail!("time {delta} is not a multiple of h = {h}");
    }
    let mut idx = Vec::with_capacity(times.len());
    for t in times {
        let l = (t / delta).round() as usize;
        if l == 0 || (l as f64 * delta - t).abs() > 1e-9 * t {
            bail!("sample times must be multiples of {delta}");
        }
        idx.push(l);
    }
    let grid = TimeGrid::new(0.0, *idx.iter().max().expect("nonempty"), delta, a)?;
    let scheme = SchemeConfig::new(kind, seed);
    Stepper::new(&net, &theta, &scheme)?;
    let d = x0.len();
    let rows: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut stepper = Stepper::new(&net, &theta, &scheme).expect("checked above");
            let run = simulate_observed(&mut stepper, &x0, &grid, &mut path_rng(seed, k));
            idx.iter().map(|l| run.obs[l * d + component]).collect()
        })
        .collect();
    Ok((0..times.len()).map(|i| rows.iter().map(|r| r[i]).collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsRow {
    pub scheme: String,
    pub h: f64,
    pub t: f64,
    pub ks: f64,
    pub non_finite: usize,
}

/// End-time laws of each scheme and step against an independent reference
/// sample at the finest step. Writes `samples.csv` and `ks.csv`.
pub fn dist_preserve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<KsRow>> {
    let spec = cfg.dist_preserve.as_ref().context("config has no [dist_preserve] section")?;
    fs::create_dir_all(out)?;
    let reference = end_time_samples(
        cfg,
        spec.reference_scheme,
        spec.reference_h,
        &spec.times,
        spec.component,
        spec.paths,
        rng::stream_key(cfg.seed, &[DIST_TAG, 0]),
    )?;
    let mut samples = csv::Writer::from_writer(create(&out.join("samples.csv"))?);
    samples.write_record(["scheme", "h", "t", "path", "value"])?;
    let mut ks_rows = Vec::new();
    let mut k = 0;
    for &kind in &spec.schemes {
        for &h in &spec.h_values {
            k += 1;
            let seed = rng::stream_key(cfg.seed, &[DIST_TAG, k]);
            let s = end_time_samples(cfg, kind, h, &spec.times, spec.component, spec.paths, seed)?;
            for (i, t) in spec.times.iter().enumerate() {
                for (p, v) in s[i].iter().enumerate() {
                    samples.write_record([kind.name().to_string(), h.to_string(), t.to_string(), p.to_string(), v.to_string()])?;
                }
                if spec.paths >= 2 {
                    ks_rows.push(KsRow {
                        scheme: kind.name().into(),
                        h,
                        t: *t,
                        ks: ks_two_sample(&s[i], &reference[i]),
                        non_finite: s[i].iter().filter(|v| !v.is_finite()).count(),
                    });
                }
            }
        }
    }
    samples.flush()?;
    let mut w = csv::Writer::from_writer(create(&out.join("ks.csv"))?);
    for r in &ks_rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(ks_rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRow {
    pub scheme: String,
    pub h: f64,
    pub paths: usize,
    pub paths_with_clamps: usize,
    pub paths_non_finite: usize,
    pub clamp_events: u64,
    /// At least half the paths clamped or left the finite range.
    pub breakdown: bool,
    /// Mean absolute shoelace area of the `(X1, X2)` loop over finite paths.
    pub mean_loop_area: f64,
}

/// Absolute shoelace area of the closed polygon through `(x, y)` points.
pub fn loop_area(states: &[f64], d: usize) -> f64 {
    let pts: Vec<(f64, f64)> = states.chunks(d).map(|s| (s[0], s[1])).collect();
    let n = pts.len();
    let twice: f64 = (0..n).map(|i| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        a.0 * b.1 - b.0 * a.1
    })
    .sum();
    0.5 * twice.abs()
}

/// Paths of every configured scheme at each step size. Writes the first
/// path of each run as `phase_<scheme>_h<h>.csv`, per-path counters to
/// `phase_paths.csv` and the summary to `phase_report.json`.
pub fn phase_portrait(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PhaseRow>> {
    let spec = cfg.phase_portrait.as_ref().context("config has no [phase_portrait] section")?;
    fs::create_dir_all(out)?;
    let net = cfg.model.network();
    let theta = cfg.theta();
    let x0 = cfg.x0();
    let mut per_path = csv::Writer::from_writer(create(&out.join("phase_paths.csv"))?);
    per_path.write_record(["scheme", "h", "path", "clamp_events", "non_finite"])?;
    let mut rows = Vec::new();
    for (s, &kind) in spec.schemes.iter().enumerate() {
        for (j, &h) in spec.h_values.iter().enumerate() {
            let steps = (spec.t_end / h).round() as usize;
            let grid = TimeGrid::uniform(0.0, steps, h)?;
            let scheme = SchemeConfig::new(kind, rng::stream_key(cfg.seed, &[PHASE_TAG, s as u64, j as u64]));
            let trajs: Vec<_> = (0..spec.paths as u64)
                .into_par_iter()
                .map(|k| simulate_path_indexed(&net, &scheme, &x0, &theta, &grid, k))
                .collect::<clesplit::Result<_>>()?;
            trajs[0].write_csv(
                create(&out.join(format!("phase_{}_h{h}.csv", kind.name())))?,
                clesplit::sim::Resolution::Fine,
            )?;
            let mut areas = Vec::new();
            for (k, t) in trajs.iter().enumerate() {
                per_path.write_record([
                    kind.name().to_string(),
                    h.to_string(),
                    k.to_string(),
                    t.clamp_events.to_string(),
                    t.diverged().to_string(),
                ])?;
                if !t.diverged() && t.states.iter().all(|v| v.is_finite()) {
                    areas.push(loop_area(&t.states, t.d()));
                }
            }
            let flagged = trajs.iter().filter(|t| t.clamp_events > 0 || t.diverged()).count();
            rows.push(PhaseRow {
                scheme: kind.name().into(),
                h,
                paths: trajs.len(),
                paths_with_clamps: trajs.iter().filter(|t| t.clamp_events > 0).count(),
                paths_non_finite: trajs.iter().filter(|t| t.diverged()).count(),
                clamp_events: trajs.iter().map(|t| t.clamp_events).sum(),
                breakdown: 2 * flagged >= trajs.len(),
                mean_loop_area: if areas.is_empty() { f64::NAN } else { clesplit::stats::mean(&areas) },
            });
        }
    }
    per_path.flush()?;
    write_json(&out.join("phase_report.json"), &rows)?;
    Ok(rows)
}

/// Zero crossings of `xs - mean(xs)`.
pub fn mean_crossings(xs: &[f64]) -> usize {
    let m = clesplit::stats::mean(xs);
    xs.windows(2).filter(|w| (w[0] - m) * (w[1] - m) < 0.0).count()
}

/// Builds the inference problem for `seed` from its synthetic dataset.
pub fn inference_problem(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<InferenceProblem> {
    let spec = cfg.infer.as_ref().context("config has no [infer] section")?;
    let obs = cfg.observation.as_ref().context("config has no [observation] section")?;
    let net = cfg.model.network();
    let noise = match (obs.estimate_sigma, obs.sigma_err) {
        (true, _) => NoiseSpec::Estimated,
        (false, Some(s)) => NoiseSpec::Known(s),
        (false, None) => NoiseSpec::None,
    };
    let mut names: Vec<String> = spec.free.iter().map(|&k| net.param_names()[k].clone()).collect();
    if obs.estimate_sigma {
        names.push("sigma_err".into());
    }
    let prior = PriorSpec::new(names, spec.prior_low.clone(), spec.prior_high.clone())?;
    Ok(InferenceProblem::new(
        net,
        SchemeConfig::new(cfg.scheme(), seed),
        cfg.x0(),
        cfg.grid()?,
        obs.selection.clone(),
        noise,
        cfg.theta(),
        spec.free.clone(),
        prior,
        data,
    )?)
}

/// True value of the inferred vector.
pub fn inferred_truth(cfg: &ExperimentConfig) -> Vec<f64> {
    let theta = cfg.theta();
    let mut t: Vec<f64> = cfg.infer.as_ref().map_or(vec![], |s| s.free.iter().map(|&k| theta[k]).collect());
    if let Some(o) = cfg.observation.as_ref().filter(|o| o.estimate_sigma) {
        t.push(o.sigma_err.unwrap_or(f64::NAN));
    }
    t
}

pub struct InferRun {
    pub seed: u64,
    pub algorithm: AlgorithmId,
    pub run: AbcRun,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct ComparisonRow {
    seed: u64,
    algorithm: &'static str,
    round: usize,
    epsilon: f64,
    acceptance_rate: f64,
    ess: f64,
    cumulative_simulator_calls: u64,
    cumulative_paths: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct PosteriorRow {
    seed: u64,
    algorithm: &'static str,
    parameter: String,
    truth: f64,
    mean: f64,
    lower95: f64,
    upper95: f64,
    covered: bool,
}

pub fn algorithm_name(a: AlgorithmId) -> &'static str {
    match a {
        AlgorithmId::AbcSmc => "abc-smc",
        AlgorithmId::AbcSmcDc => "abc-smc-dc",
    }
}

/// Runs every configured algorithm on one synthetic dataset per seed.
///
/// Layout: `seed_<s>/data.csv`, `seed_<s>/<algorithm>/cloud_<r>.csv`,
/// `diagnostics.json`, `summary_model.json`, `timing.json`, plus top-level
/// `comparison.csv` and `posterior.csv`.
pub fn infer(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<InferRun>> {
    let spec = cfg.infer.as_ref().context("config has no [infer] section")?;
    fs::create_dir_all(out)?;
    let truth = inferred_truth(cfg);
    let mut runs = Vec::new();
    let mut comparison = csv::Writer::from_writer(create(&out.join("comparison.csv"))?);
    let mut posterior = csv::Writer::from_writer(create(&out.join("posterior.csv"))?);
    for &seed in &spec.seeds {
        let dir = out.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        let data = synthetic_dataset(cfg, seed)?;
        data.save(&dir.join("data"))?;
        let problem = inference_problem(cfg, &data, seed)?;
        let settings = AbcSettings {
            m_particles: spec.m_particles,
            max_rounds: spec.max_rounds,
            alpha: spec.alpha,
            min_acceptance: spec.min_acceptance,
            pretrain: spec.pretrain,
            seed,
            ..AbcSettings::default()
        };
        for &alg in &spec.algorithms {
            let run = match alg {
                AlgorithmId::AbcSmc => run_abc_smc(&problem, &settings)?,
                AlgorithmId::AbcSmcDc => {
                    run_abc_smc_dc(&problem, &settings, &DcConfig::new(spec.p_particles, spec.c_scale))?
                }
            };
            let name = algorithm_name(alg);
            let adir: PathBuf = dir.join(name);
            fs::create_dir_all(&adir)?;
            for c in &run.clouds {
                write_cloud_csv(c, &run.report.parameters, create(&adir.join(format!("cloud_{}.csv", c.round)))?)?;
            }
            run.write_diagnostics(create(&adir.join("diagnostics.json"))?)?;
            fs::write(adir.join("summary_model.json"), run.summary.to_json()? + "\n")?;
            write_json(&adir.join("timing.json"), &serde_json::json!({ "round_seconds": run.round_seconds }))?;
            for r in run.report.rounds.iter().filter(|r| r.completed) {
                comparison.serialize(ComparisonRow {
                    seed,
                    algorithm: name,
                    round: r.round,
                    epsilon: r.epsilon,
                    acceptance_rate: r.acceptance_rate,
                    ess: r.ess,
                    cumulative_simulator_calls: r.cumulative_simulator_calls,
                    cumulative_paths: r.cumulative_paths,
                })?;
            }
            let fin = run.final_cloud();
            for (k, p) in run.report.parameters.iter().enumerate() {
                let (lo, hi) = fin.credible_interval(k, 0.95);
                posterior.serialize(PosteriorRow {
                    seed,
                    algorithm: name,
                    parameter: p.clone(),
                    truth: truth[k],
                    mean: fin.weighted_mean()[k],
                    lower95: lo,
                    upper95: hi,
                    covered: lo <= truth[k] && truth[k] <= hi,
                })?;
            }
            runs.push(InferRun { seed, algorithm: alg, run });
        }
    }
    comparison.flush()?;
    posterior.flush()?;
    Ok(runs)
}
