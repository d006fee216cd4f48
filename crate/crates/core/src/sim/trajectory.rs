use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::scheme::{SchemeConfig, Stepper};
use crate::crn::ReactionNetwork;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Fine-grid path of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub labels: Vec<String>,
    /// `(nA + 1) x d`, row-major.
    pub states: Vec<f64>,
    pub clamp_events: u64,
    /// First fine step whose result was not finite.
    pub diverged_at: Option<usize>,
}

/// Which rows of a trajectory to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Fine,
    Observation,
}

impl Trajectory {
    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn n_points(&self) -> usize {
        self.states.len() / self.d()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let d = self.d();
        &self.states[k * d..(k + 1) * d]
    }

    /// State at observation time `t_l`.
    pub fn observation(&self, l: usize) -> &[f64] {
        self.state(l * self.grid.a_sub())
    }

    /// `(n + 1) x d` observation-grid subsample, row-major.
    pub fn observation_states(&self) -> Vec<f64> {
        (0..=self.grid.n()).flat_map(|l| self.observation(l).iter().copied()).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.n_points() - 1)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Rows `(t, x_1, ..., x_d)` at the requested resolution.
    pub fn rows(&self, res: Resolution) -> Vec<(f64, &[f64])> {
        match res {
            Resolution::Fine => (0..self.n_points()).map(|k| (self.grid.fine_time(k), self.state(k))).collect(),
            Resolution::Observation => {
                (0..=self.grid.n()).map(|l| (self.grid.obs_time(l), self.observation(l))).collect()
            }
        }
    }

    /// CSV with header `t,<species labels>`.
    pub fn write_csv<W: Write>(&self, writer: W, res: Resolution) -> Result<()> {
        write_table(writer, &self.labels, self.rows(res))
    }
}

pub(crate) fn write_table<'r, W: Write>(
    writer: W,
    labels: &[String],
    rows: impl IntoIterator<Item = (f64, &'r [f64])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (t, x) in rows {
        let mut rec = vec![t.to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed `t,<columns>` table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// Row-major values, `times.len() x columns.len()`.
    pub values: Vec<f64>,
}

/// Reads a CSV written by [`Trajectory::write_csv`] or the dataset writer.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("t") {
        return Err(Error::Config("table must start with a `t` column".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = vec![];
    let mut values = vec![];
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}")));
        times.push(parse(&rec[0])?);
        for s in rec.iter().skip(1) {
            values.push(parse(s)?);
        }
    }
    Ok(Table { columns, times, values })
}

/// Counters of one run, exported next to trajectory CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: String,
    pub seed: u64,
    pub path: u64,
    pub fine_steps: usize,
    pub h: f64,
    pub clamp_events: u64,
    pub diverged_at: Option<usize>,
}

impl RunSummary {
    pub fn new(config: &SchemeConfig, path: u64, traj: &Trajectory) -> Self {
        Self {
            scheme: config.kind.name().into(),
            seed: config.seed,
            path,
            fine_steps: traj.grid.n_steps(),
            h: traj.grid.h(),
            clamp_events: traj.clamp_events,
            diverged_at: traj.diverged_at,
        }
    }
}

/// RNG stream of path `path` under `seed`.
pub fn path_rng(seed: u64, path: u64) -> SimRng {
    rng::stream(seed, &[0x5041_5448, path])
}

/// Simulates one path with the stream `(config.seed, 0)`.
pub fn simulate_path(
    net: &ReactionNetwork,
    config: &SchemeConfig,
    x0: &[f64],
    theta: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    simulate_path_indexed(net, config, x0, theta, grid, 0)
}

/// Simulates path number `path` with its own stream `(config.seed, path)`.
pub fn simulate_path_indexed(
    net: &ReactionNetwork,
    config: &SchemeConfig,
    x0: &[f64],
    theta: &[f64],
    grid: &TimeGrid,
    path: u64,
) -> Result<Trajectory> {
    net.check_state(x0)?;
    let mut stepper = Stepper::new(net, theta, config)?;
    Ok(simulate_with(&mut stepper, x0, grid, &mut path_rng(config.seed, path)))
}

/// Runs `stepper` over the whole grid, keeping every fine state.
pub fn simulate_with<R: Rng + ?Sized>(stepper: &mut Stepper<'_>, x0: &[f64], grid: &TimeGrid, rng: &mut R) -> Trajectory {
    let d = x0.len();
    let steps = grid.n_steps();
    let h = grid.h();
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut clamp_events = 0;
    let mut diverged_at = None;
    for k in 0..steps {
        let out = stepper.step(&mut x, h, rng);
        clamp_events += out.clamps;
        if !out.finite && diverged_at.is_none() {
            diverged_at = Some(k);
        }
        states.extend_from_slice(&x);
    }
    Trajectory { grid: *grid, labels: stepper.net().species_labels().to_vec(), states, clamp_events, diverged_at }
}

/// Path kept only at the observation times, plus the state one fine step
/// before each observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedRun {
    /// `(n + 1) x d` states at `t_0..t_n`.
    pub obs: Vec<f64>,
    /// `n x d` states at fine index `lA - 1` for `l = 1..n`.
    pub pre_obs: Vec<f64>,
    pub clamp_events: u64,
    pub diverged: bool,
}

pub fn simulate_observed<R: Rng + ?Sized>(stepper: &mut Stepper<'_>, x0: &[f64], grid: &TimeGrid, rng: &mut R) -> ObservedRun {
    let d = x0.len();
    let h = grid.h();
    let a = grid.a_sub();
    let mut run = ObservedRun {
        obs: Vec::with_capacity((grid.n() + 1) * d),
        pre_obs: Vec::with_capacity(grid.n() * d),
        clamp_events: 0,
        diverged: false,
    };
    run.obs.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for _ in 0..grid.n() {
        for s in 0..a {
            if s == a - 1 {
                run.pre_obs.extend_from_slice(&x);
            }
            let out = stepper.step(&mut x, h, rng);
            run.clamp_events += out.clamps;
            run.diverged |= !out.finite;
        }
        run.obs.extend_from_slice(&x);
    }
    run
}
