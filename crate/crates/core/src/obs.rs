//! Partial, noisy observation of a trajectory: `Y(t_l) = L X(t_l) + xi_l`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{read_table, write_table, Trajectory};

/// Jitter added to a covariance whose Cholesky factorization fails.
pub const COV_JITTER: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    d: usize,
    /// Row `k` of `L` is the unit vector of species `selection[k]`.
    selection: Vec<usize>,
    noise: Option<DMatrix<f64>>,
}

impl ObservationModel {
    pub fn new(d: usize, selection: Vec<usize>, noise: Option<DMatrix<f64>>) -> Result<Self> {
        if selection.is_empty() {
            return Err(Error::Config("observation selects no species".into()));
        }
        let mut seen = vec![false; d];
        for &i in &selection {
            if i >= d || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("selection {selection:?} must list distinct species below {d}")));
            }
        }
        if let Some(s) = &noise {
            let k = selection.len();
            if s.nrows() != k || s.ncols() != k {
                return Err(Error::Config(format!("noise covariance must be {k} x {k}")));
            }
            if (s - s.transpose()).abs().max() > 1e-12 * (1.0 + s.abs().max()) {
                return Err(Error::Config("noise covariance is not symmetric".into()));
            }
            if s.clone().symmetric_eigenvalues().iter().any(|&l| l < -1e-12 * (1.0 + s.abs().max())) {
                return Err(Error::Config("noise covariance is not positive semidefinite".into()));
            }
        }
        Ok(Self { d, selection, noise })
    }

    /// Noise `sigma^2 I`, or no noise when `sigma_err` is `None`.
    pub fn with_sigma(d: usize, selection: Vec<usize>, sigma_err: Option<f64>) -> Result<Self> {
        if let Some(s) = sigma_err {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Domain(format!("sigma_err = {s} must be finite and >= 0")));
            }
        }
        let k = selection.len();
        Self::new(d, selection, sigma_err.map(|s| DMatrix::identity(k, k) * (s * s)))
    }

    pub fn identity(d: usize) -> Self {
        Self { d, selection: (0..d).collect(), noise: None }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_o(&self) -> usize {
        self.selection.len()
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn noise(&self) -> Option<&DMatrix<f64>> {
        self.noise.as_ref()
    }

    /// Same selection with a different noise covariance.
    pub fn with_noise(&self, noise: Option<DMatrix<f64>>) -> Result<Self> {
        Self::new(self.d, self.selection.clone(), noise)
    }

    pub fn l_matrix(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.d_o(), self.d);
        for (k, &i) in self.selection.iter().enumerate() {
            l[(k, i)] = 1.0;
        }
        l
    }

    /// Writes `L x` into `out`.
    #[inline]
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(&self.selection) {
            *o = x[i];
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.selection.iter().map(|&i| x[i]).collect()
    }

    /// Square-root factor `S` with `S S^T = Sigma`, or `None` without noise.
    pub fn noise_factor(&self) -> Option<DMatrix<f64>> {
        self.noise.as_ref().map(sqrt_psd)
    }

    /// Projects the `(n + 1) x d` states and adds measurement noise.
    pub fn observe_states<R: Rng + ?Sized>(&self, states: &[f64], rng: &mut R) -> Vec<f64> {
        let factor = self.noise_factor();
        let k = self.d_o();
        let mut out = Vec::with_capacity(states.len() / self.d * k);
        let mut z = vec![0.0; k];
        for x in states.chunks(self.d) {
            let start = out.len();
            out.extend(self.selection.iter().map(|&i| x[i]));
            if let Some(f) = &factor {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for a in 0..k {
                    out[start + a] += (0..k).map(|b| f[(a, b)] * z[b]).sum::<f64>();
                }
            }
        }
        out
    }
}

/// Symmetric square root factor of a PSD matrix; exact for diagonal input.
fn sqrt_psd(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || s[(i, j)] == 0.0));
    if diagonal {
        return DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|i| s[(i, i)].max(0.0).sqrt())));
    }
    let eig = s.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

/// Where a synthetic dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub theta_true: Vec<f64>,
    pub scheme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_err: Option<f64>,
}

/// Observed records `y(t_0), ..., y(t_n)` at equidistant times.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `(n + 1) x d_o`, row-major.
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(times: Vec<f64>, labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if labels.is_empty() || values.len() != times.len() * labels.len() {
            return Err(Error::Config("dataset values do not match times x channels".into()));
        }
        if times.len() >= 2 {
            let delta = times[1] - times[0];
            let ok = delta > 0.0
                && times.iter().enumerate().all(|(l, t)| (t - (times[0] + l as f64 * delta)).abs() <= 1e-9 * (1.0 + t.abs()));
            if !ok {
                return Err(Error::Config("dataset times must be equidistant and increasing".into()));
            }
        }
        Ok(Self { times, labels, values, provenance: None })
    }

    pub fn d_o(&self) -> usize {
        self.labels.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn record(&self, l: usize) -> &[f64] {
        let k = self.d_o();
        &self.values[l * k..(l + 1) * k]
    }

    /// Records at `t_1..t_n` (drops the initial time), row-major.
    pub fn after_initial(&self) -> &[f64] {
        &self.values[self.d_o()..]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.labels, self.times.iter().enumerate().map(|(l, &t)| (t, self.record(l))))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let t = read_table(reader)?;
        Self::new(t.times, t.columns, t.values)
    }

    /// Writes `<stem>.csv` and, when present, the provenance sidecar `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(stem.with_extension("csv"))?)?;
        if let Some(p) = &self.provenance {
            std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(p)? + "\n")?;
        }
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let mut ds = Self::read_csv(std::fs::File::open(stem.with_extension("csv"))?)?;
        let side = stem.with_extension("json");
        if side.exists() {
            ds.provenance = Some(serde_json::from_str(&std::fs::read_to_string(side)?)?);
        }
        Ok(ds)
    }
}

/// Observes a trajectory at its observation times. Channel labels are
/// `y_1..y_{d_o}`.
pub fn observe<R: Rng + ?Sized>(traj: &Trajectory, model: &ObservationModel, rng: &mut R) -> Result<Dataset> {
    if traj.d() != model.d() {
        return Err(Error::Config(format!("trajectory has {} species, model expects {}", traj.d(), model.d())));
    }
    let values = model.observe_states(&traj.observation_states(), rng);
    Dataset::new(traj.grid.obs_times(), (1..=model.d_o()).map(|k| format!("y_{k}")).collect(), values)
}

/// Multivariate Gaussian log-density `log phi(y | mean, cov)`. A covariance
/// that fails Cholesky is retried once with `COV_JITTER * I` added.
pub fn obs_log_density(y: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    GaussianDensity::new(mean.to_vec(), cov.clone())?.log_density(y)
}

/// Gaussian with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Config(format!("covariance must be {k} x {k}")));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("covariance has non-finite entries".into()));
        }
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => (cov + DMatrix::identity(k, k) * COV_JITTER)
                .cholesky()
                .ok_or_else(|| Error::Numeric("covariance is not positive definite after jitter".into()))?,
        };
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { mean: DVector::from_vec(mean), chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::Config(format!("expected a point of dimension {}, got {}", self.dim(), y.len())));
        }
        let diff = DVector::from_column_slice(y) - &self.mean;
        let sol = self.chol.l().solve_lower_triangular(&diff).expect("Cholesky factor is invertible");
        Ok(self.log_norm - 0.5 * sol.norm_squared())
    }
}
