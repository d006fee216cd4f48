use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine simulation grid: `n` observation intervals of length `delta`, each
/// split into `a_sub` steps of size `h = delta / a_sub`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    n: usize,
    delta: f64,
    a_sub: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, n: usize, delta: f64, a_sub: usize) -> Result<Self> {
        if !t0.is_finite() || !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("invalid grid start {t0} or step {delta}")));
        }
        if n == 0 || a_sub == 0 {
            return Err(Error::Config("grid needs n >= 1 and A >= 1".into()));
        }
        Ok(Self { t0, n, delta, a_sub })
    }

    /// Grid with fine step `h` covering `[t0, t0 + steps * h]`, observed at every step.
    pub fn uniform(t0: f64, steps: usize, h: f64) -> Result<Self> {
        Self::new(t0, steps, h, 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn a_sub(&self) -> usize {
        self.a_sub
    }

    pub fn h(&self) -> f64 {
        self.delta / self.a_sub as f64
    }

    /// Number of fine steps `n A`.
    pub fn n_steps(&self) -> usize {
        self.n * self.a_sub
    }

    /// `tau_k`; at multiples of `A` this is exactly the observation time.
    pub fn fine_time(&self, k: usize) -> f64 {
        let (l, r) = (k / self.a_sub, k % self.a_sub);
        if r == 0 {
            self.obs_time(l)
        } else {
            self.obs_time(l) + r as f64 * self.h()
        }
    }

    pub fn obs_time(&self, l: usize) -> f64 {
        self.t0 + l as f64 * self.delta
    }

    pub fn obs_times(&self) -> Vec<f64> {
        (0..=self.n).map(|l| self.obs_time(l)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.obs_time(self.n)
    }
}
