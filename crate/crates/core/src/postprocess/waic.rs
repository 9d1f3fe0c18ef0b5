//! Widely applicable information criterion from per-entry log-likelihood draws.
//!
//! `lppd = sum_n log mean_s exp(l_ns)` and `p_waic = sum_n var_s(l_ns)`
//! (divisor `S - 1`, and zero for a single draw); `waic = lppd - p_waic`, so
//! larger is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaicReport {
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
    /// `-2 * waic`, the deviance scale (smaller is better).
    pub deviance: f64,
    pub n_entries: usize,
    pub n_samples: usize,
}

impl WaicReport {
    fn new(lppd: f64, p_waic: f64, n_entries: usize, n_samples: usize) -> Self {
        let waic = lppd - p_waic;
        Self { lppd, p_waic, waic, deviance: -2.0 * waic, n_entries, n_samples }
    }
}

/// WAIC from a matrix of log-likelihood draws, `loglik[s][n]`.
pub fn waic(loglik: &[Vec<f64>]) -> Result<WaicReport> {
    let s = loglik.len();
    if s == 0 {
        return Err(Error::InvalidConfig("WAIC needs at least one posterior sample".into()));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|row| row.len() != n) {
        return Err(Error::dim("every sample must hold the same number of log-likelihood entries"));
    }
    if loglik.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite log-likelihood entry".into()));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut column = vec![0.0; s];
    for j in 0..n {
        for (c, row) in column.iter_mut().zip(loglik) {
            *c = row[j];
        }
        lppd += log_sum_exp(&column) - (s as f64).ln();
        let mean = column.iter().sum::<f64>() / s as f64;
        if s > 1 {
            p_waic += column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
        }
    }
    Ok(WaicReport::new(lppd, p_waic, n, s))
}

/// Streaming version of [`waic`]: running log-sum-exp and Welford moments
/// per entry, so the full draw matrix never has to be held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicAccumulator {
    n_samples: usize,
    max: Vec<f64>,
    scaled_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WaicAccumulator {
    pub fn new(n_entries: usize) -> Self {
        Self {
            n_samples: 0,
            max: vec![f64::MIN; n_entries],
            scaled_sum: vec![0.0; n_entries],
            mean: vec![0.0; n_entries],
            m2: vec![0.0; n_entries],
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn push(&mut self, draw: &[f64]) -> Result<()> {
        if draw.len() != self.max.len() {
            return Err(Error::dim(format!(
                "log-likelihood draw has {} entries, accumulator expects {}",
                draw.len(),
                self.max.len()
            )));
        }
        if draw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite log-likelihood entry".into()));
        }
        self.n_samples += 1;
        let count = self.n_samples as f64;
        for (j, &x) in draw.iter().enumerate() {
            if x > self.max[j] {
                self.scaled_sum[j] = self.scaled_sum[j] * (self.max[j] - x).exp() + 1.0;
                self.max[j] = x;
            } else {
                self.scaled_sum[j] += (x - self.max[j]).exp();
            }
            let delta = x - self.mean[j];
            self.mean[j] += delta / count;
            self.m2[j] += delta * (x - self.mean[j]);
        }
        Ok(())
    }

    /// Combine with an accumulator over other draws of the same entries.
    pub fn merge(&mut self, other: &WaicAccumulator) -> Result<()> {
        if other.max.len() != self.max.len() {
            return Err(Error::dim("accumulators cover different entries"));
        }
        let (na, nb) = (self.n_samples as f64, other.n_samples as f64);
        let n = na + nb;
        if other.n_samples == 0 {
            return Ok(());
        }
        for j in 0..self.max.len() {
            let m = self.max[j].max(other.max[j]);
            self.scaled_sum[j] = self.scaled_sum[j] * (self.max[j] - m).exp() + other.scaled_sum[j] * (other.max[j] - m).exp();
            self.max[j] = m;
            let delta = other.mean[j] - self.mean[j];
            self.m2[j] += other.m2[j] + delta * delta * na * nb / n;
            self.mean[j] += delta * nb / n;
        }
        self.n_samples += other.n_samples;
        Ok(())
    }

    pub fn report(&self) -> Result<WaicReport> {
        let s = self.n_samples;
        if s == 0 {
            return Err(Error::InvalidConfig("WAIC needs at least one posterior sample".into()));
        }
        let log_s = (s as f64).ln();
        let lppd = self.max.iter().zip(&self.scaled_sum).map(|(m, z)| m + z.ln() - log_s).sum();
        let p_waic = if s > 1 { self.m2.iter().sum::<f64>() / (s - 1) as f64 } else { 0.0 };
        Ok(WaicReport::new(lppd, p_waic, self.max.len(), s))
    }
}
