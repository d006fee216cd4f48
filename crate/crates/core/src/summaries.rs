//! Summary statistics: handcrafted path features fed to one ridge
//! regression per parameter, so that `S(path)` estimates `E[theta | path]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Training pairs required per feature before a (re)fit is attempted.
pub const MIN_PAIRS_PER_FEATURE: usize = 10;

const PER_CHANNEL: usize = 10;

/// Number of features for `d_o` channels.
pub fn feature_count(d_o: usize) -> usize {
    PER_CHANNEL * d_o + d_o * (d_o - 1) / 2
}

pub fn feature_names(d_o: usize) -> Vec<String> {
    let mut names = vec![];
    for c in 1..=d_o {
        for f in ["mean", "sd", "ac1", "ac2", "min", "max", "diff_mean", "diff_sd", "first", "last"] {
            names.push(format!("{f}_{c}"));
        }
    }
    for a in 1..=d_o {
        for b in a + 1..=d_o {
            names.push(format!("corr_{a}_{b}"));
        }
    }
    names
}

fn autocorr(x: &[f64], m: f64, lag: usize) -> f64 {
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if den == 0.0 || x.len() <= lag {
        return 0.0;
    }
    x.iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / den
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Feature vector of a `rows x d_o` path (row-major): per channel mean, sd,
/// lag-1 and lag-2 autocorrelation, min, max, mean and sd of first
/// differences, first and last value; then all pairwise channel correlations.
pub fn featurize(path: &[f64], d_o: usize) -> Vec<f64> {
    let rows = path.len() / d_o;
    let channels: Vec<Vec<f64>> = (0..d_o).map(|c| (0..rows).map(|t| path[t * d_o + c]).collect()).collect();
    let mut out = Vec::with_capacity(feature_count(d_o));
    for x in &channels {
        let m = stats::mean(x);
        let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        out.push(m);
        out.push(stats::variance(x).sqrt());
        out.push(autocorr(x, m, 1));
        out.push(autocorr(x, m, 2));
        out.push(x.iter().copied().fold(f64::INFINITY, f64::min));
        out.push(x.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        out.push(if diffs.is_empty() { 0.0 } else { stats::mean(&diffs) });
        out.push(stats::variance(&diffs).sqrt());
        out.push(x[0]);
        out.push(x[rows - 1]);
    }
    for a in 0..d_o {
        for b in a + 1..d_o {
            out.push(corr(&channels[a], &channels[b]));
        }
    }
    out
}

/// Growing set of `(path, theta)` training pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingStore {
    d_o: usize,
    p: usize,
    paths: Vec<Vec<f64>>,
    thetas: Vec<Vec<f64>>,
}

impl TrainingStore {
    pub fn new(d_o: usize, p: usize) -> Self {
        Self { d_o, p, paths: vec![], thetas: vec![] }
    }

    pub fn push(&mut self, path: Vec<f64>, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.p || !path.len().is_multiple_of(self.d_o) || path.is_empty() {
            return Err(Error::Config("training pair has the wrong shape".into()));
        }
        if path.iter().chain(&theta).any(|v| !v.is_finite()) {
            return Err(Error::Domain("training pair contains non-finite values".into()));
        }
        self.paths.push(path);
        self.thetas.push(theta);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn d_o(&self) -> usize {
        self.d_o
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.paths.iter().map(Vec::as_slice).zip(self.thetas.iter().map(Vec::as_slice))
    }
}

/// A summary statistic mapping an observed path to a vector.
pub trait SummaryStatistic: Send + Sync {
    fn dim(&self) -> usize;

    /// Summary of a `rows x d_o` path.
    fn summarize(&self, path: &[f64]) -> Vec<f64>;

    /// Refits on `store`. Returns `false` when the store is too small and the
    /// previous statistic is kept.
    fn retrain(&mut self, store: &TrainingStore) -> Result<bool>;
}

/// Ridge regression of each parameter on standardized path features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryModel {
    pub schema_version: u32,
    pub d_o: usize,
    pub feature_names: Vec<String>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// `p` rows of `[intercept, beta_1..beta_q]`.
    pub coefficients: Vec<Vec<f64>>,
    pub ridge: f64,
    pub fitted: bool,
    pub n_train: usize,
}

impl SummaryModel {
    /// Unfitted model whose summary is all zeros.
    pub fn unfitted(d_o: usize, p: usize) -> Self {
        let q = feature_count(d_o);
        Self {
            schema_version: FEATURE_SCHEMA_VERSION,
            d_o,
            feature_names: feature_names(d_o),
            feature_mean: vec![0.0; q],
            feature_scale: vec![1.0; q],
            coefficients: vec![vec![0.0; q + 1]; p],
            ridge: DEFAULT_RIDGE,
            fitted: false,
            n_train: 0,
        }
    }

    pub fn q(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    pub fn fit(store: &TrainingStore, ridge: f64) -> Result<Self> {
        let q = feature_count(store.d_o());
        let p = store.p();
        if store.len() < MIN_PAIRS_PER_FEATURE * q {
            return Err(Error::Config(format!(
                "need at least {} training pairs for {q} features, have {}",
                MIN_PAIRS_PER_FEATURE * q,
                store.len()
            )));
        }
        let n = store.len();
        let feats: Vec<Vec<f64>> = store.pairs().map(|(path, _)| featurize(path, store.d_o())).collect();
        let mut mean = vec![0.0; q];
        let mut scale = vec![0.0; q];
        for k in 0..q {
            let col: Vec<f64> = feats.iter().map(|f| f[k]).collect();
            mean[k] = stats::mean(&col);
            let sd = stats::variance(&col).sqrt();
            scale[k] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        let z = DMatrix::from_fn(n, q, |i, k| (feats[i][k] - mean[k]) / scale[k]);
        let gram = z.transpose() * &z + DMatrix::identity(q, q) * ridge;
        let chol = gram.cholesky().ok_or_else(|| Error::Numeric("ridge system is singular".into()))?;
        let mut coefficients = Vec::with_capacity(p);
        for j in 0..p {
            let y: Vec<f64> = store.pairs().map(|(_, t)| t[j]).collect();
            let ybar = stats::mean(&y);
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
            let beta = chol.solve(&(z.transpose() * yc));
            let mut row = Vec::with_capacity(q + 1);
            row.push(ybar);
            row.extend(beta.iter());
            coefficients.push(row);
        }
        Ok(Self {
            schema_version: FEATURE_SCHEMA_VERSION,
            d_o: store.d_o(),
            feature_names: feature_names(store.d_o()),
            feature_mean: mean,
            feature_scale: scale,
            coefficients,
            ridge,
            fitted: true,
            n_train: n,
        })
    }

    /// Summary from a precomputed feature vector.
    pub fn summarize_features(&self, f: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|row| {
                row[0]
                    + f.iter()
                        .zip(&self.feature_mean)
                        .zip(&self.feature_scale)
                        .zip(&row[1..])
                        .map(|(((x, m), s), b)| b * (x - m) / s)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported feature schema version {}", m.schema_version)));
        }
        Ok(m)
    }
}

impl SummaryStatistic for SummaryModel {
    fn dim(&self) -> usize {
        self.p()
    }

    fn summarize(&self, path: &[f64]) -> Vec<f64> {
        self.summarize_features(&featurize(path, self.d_o))
    }

    fn retrain(&mut self, store: &TrainingStore) -> Result<bool> {
        if store.len() < MIN_PAIRS_PER_FEATURE * feature_count(store.d_o()) {
            return Ok(false);
        }
        *self = Self::fit(store, self.ridge)?;
        Ok(true)
    }
}

/// Per-component scale for [`distance`]: MAD of reference summaries, with
/// zero (or non-finite) deviations replaced by 1.
pub fn mad_scale(summaries: &[Vec<f64>]) -> Vec<f64> {
    let p = summaries.first().map_or(0, Vec::len);
    (0..p)
        .map(|k| {
            let col: Vec<f64> = summaries.iter().map(|s| s[k]).collect();
            let m = stats::mad(&col);
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        })
        .collect()
}

/// Euclidean distance of componentwise scaled differences.
pub fn distance(s1: &[f64], s2: &[f64], scale: &[f64]) -> f64 {
    s1.iter().zip(s2).zip(scale).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>().sqrt()
}
