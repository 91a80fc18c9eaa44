//! Generalized Hurst exponent from q-order structure functions.
//!
//! The analyzed path `X(t)` is the cumulative sum of the demeaned returns,
//! so lag-`tau` increments are aggregated `tau`-day returns. For each `q`
//!
//! ```text
//! K_q(tau) = <|X(t + tau) - X(t)|^q> / <|X(t)|^q>,   K_q(tau) ~ tau^(q H(q))
//! ```
//!
//! `H(q)` is the OLS slope of `ln K_q(tau)` on `ln tau` over `tau = 1..tau_max`,
//! divided by `q`, averaged over a range of `tau_max` values. The time
//! resolution is one day.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::ols;
use crate::ingest::ReturnSeries;

/// Shortest series [`estimate_hurst`] accepts.
pub const MIN_SERIES_LEN: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum GheError {
    #[error("series of length {len} is too short (need {need})")]
    TooShort { len: usize, need: usize },
    #[error("moment order must be positive and finite, got {0}")]
    InvalidQ(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("structure function vanishes for q={q} at tau={tau}")]
    DegenerateStructure { q: f64, tau: usize },
    #[error("log-log fit is singular for q={q}")]
    SingularFit { q: f64 },
    #[error("no moment order could be estimated: {0}")]
    AllFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GheConfig {
    /// Positive moment orders.
    pub q_grid: Vec<f64>,
    /// Inclusive range of `tau_max` values averaged over.
    pub tau_max_range: (usize, usize),
}

impl Default for GheConfig {
    fn default() -> Self {
        Self {
            q_grid: (1..=40).map(|i| i as f64 / 10.0).collect(),
            tau_max_range: (5, 19),
        }
    }
}

impl GheConfig {
    pub fn with_q(q_grid: Vec<f64>) -> Self {
        Self {
            q_grid,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), GheError> {
        if self.q_grid.is_empty() {
            return Err(GheError::InvalidConfig("empty q grid".into()));
        }
        if let Some(q) = self.q_grid.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
            return Err(GheError::InvalidQ(*q));
        }
        let (lo, hi) = self.tau_max_range;
        if lo < 2 || lo > hi {
            return Err(GheError::InvalidConfig(format!(
                "tau_max range [{lo}, {hi}] must satisfy 2 <= min <= max"
            )));
        }
        if 4 * hi >= n {
            return Err(GheError::TooShort {
                len: n,
                need: 4 * hi + 1,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFunction {
    pub q: f64,
    pub taus: Vec<usize>,
    pub k_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFailure {
    pub q: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GheResult {
    pub q_grid: Vec<f64>,
    /// `NaN` where the estimate failed; see `failures`.
    pub h_of_q: Vec<f64>,
    /// Sample standard deviation of `H(q | tau_max)` across the range.
    pub h_stderr: Vec<f64>,
    pub qhq: Vec<f64>,
    /// `H(q | tau_max)` per q, one entry per `tau_max` in the range.
    pub h_by_tau_max: Vec<Vec<f64>>,
    pub tau_max_range: (usize, usize),
    pub failures: Vec<QFailure>,
}

impl GheResult {
    /// `H(q)` at the grid point closest to `q`.
    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q_grid
            .iter()
            .position(|g| (g - q).abs() < 1e-9)
            .map(|i| self.h_of_q[i])
    }
}

/// Cumulative sum of the demeaned series.
pub fn cumulative_path(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v - mean;
            acc
        })
        .collect()
}

/// `K_q(tau)` for `tau = 1..=tau_max` of the cumulative return path.
pub fn structure_function(
    series: &ReturnSeries,
    q: f64,
    tau_max: usize,
) -> Result<StructureFunction, GheError> {
    structure_function_path(&cumulative_path(series.values()), q, tau_max)
}

/// `K_q(tau)` of an explicit path `X(t)`, using every overlapping window.
pub fn structure_function_path(
    path: &[f64],
    q: f64,
    tau_max: usize,
) -> Result<StructureFunction, GheError> {
    if !(q.is_finite() && q > 0.0) {
        return Err(GheError::InvalidQ(q));
    }
    if tau_max == 0 || path.len() < 4 * tau_max {
        return Err(GheError::TooShort {
            len: path.len(),
            need: 4 * tau_max.max(1),
        });
    }
    let norm = moment(path.iter().map(|x| x.abs()), q);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(GheError::DegenerateStructure { q, tau: 0 });
    }
    let mut k_values = Vec::with_capacity(tau_max);
    for tau in 1..=tau_max {
        let inc = path.windows(tau + 1).map(|w| (w[tau] - w[0]).abs());
        let k = moment(inc, q) / norm;
        if !(k > 0.0 && k.is_finite()) {
            return Err(GheError::DegenerateStructure { q, tau });
        }
        k_values.push(k);
    }
    Ok(StructureFunction {
        q,
        taus: (1..=tau_max).collect(),
        k_values,
    })
}

fn moment(abs_values: impl Iterator<Item = f64>, q: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in abs_values {
        sum += if q == 1.0 {
            a
        } else if q == 2.0 {
            a * a
        } else {
            a.powf(q)
        };
        count += 1;
    }
    sum / count as f64
}

/// `H(q)` from the slope of a structure function over `tau = 1..=tau_max`.
pub fn hurst_from_structure(sf: &StructureFunction, tau_max: usize) -> Result<f64, GheError> {
    let m = tau_max.min(sf.k_values.len());
    let x: Vec<f64> = sf.taus[..m].iter().map(|t| (*t as f64).ln()).collect();
    let y: Vec<f64> = sf.k_values[..m].iter().map(|k| k.ln()).collect();
    let fit = ols(&x, &y).ok_or(GheError::SingularFit { q: sf.q })?;
    Ok(fit.slope / sf.q)
}

/// Generalized Hurst exponents over the configured q grid.
pub fn estimate_hurst(series: &ReturnSeries, config: &GheConfig) -> Result<GheResult, GheError> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(GheError::TooShort {
            len: n,
            need: MIN_SERIES_LEN,
        });
    }
    config.validate(n)?;
    let path = cumulative_path(series.values());
    let (lo, hi) = config.tau_max_range;

    let mut h_of_q = Vec::with_capacity(config.q_grid.len());
    let mut h_stderr = Vec::with_capacity(config.q_grid.len());
    let mut h_by_tau_max = Vec::with_capacity(config.q_grid.len());
    let mut failures = Vec::new();
    for &q in &config.q_grid {
        let per_tau: Result<Vec<f64>, GheError> = structure_function_path(&path, q, hi)
            .and_then(|sf| (lo..=hi).map(|t| hurst_from_structure(&sf, t)).collect());
        match per_tau {
            Ok(hs) => {
                let m = hs.len() as f64;
                let mean = hs.iter().sum::<f64>() / m;
                let sd = if hs.len() > 1 {
                    (hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                } else {
                    0.0
                };
                h_of_q.push(mean);
                h_stderr.push(sd);
                h_by_tau_max.push(hs);
            }
            Err(e) => {
                failures.push(QFailure {
                    q,
                    reason: e.to_string(),
                });
                h_of_q.push(f64::NAN);
                h_stderr.push(f64::NAN);
                h_by_tau_max.push(Vec::new());
            }
        }
    }
    if failures.len() == config.q_grid.len() {
        return Err(GheError::AllFailed(failures[0].reason.clone()));
    }
    let qhq = config
        .q_grid
        .iter()
        .zip(&h_of_q)
        .map(|(q, h)| q * h)
        .collect();
    Ok(GheResult {
        q_grid: config.q_grid.clone(),
        h_of_q,
        h_stderr,
        qhq,
        h_by_tau_max,
        tau_max_range: config.tau_max_range,
        failures,
    })
}

/// `(q, q H(q))` points; a monofractal gives a straight line through the origin.
pub fn qhq_curve(result: &GheResult) -> Vec<(f64, f64)> {
    result
        .q_grid
        .iter()
        .zip(&result.h_of_q)
        .filter(|(_, h)| h.is_finite())
        .map(|(q, h)| (*q, q * h))
        .collect()
}

/// Largest absolute residual of the points from their OLS straight line.
pub fn linearity_residual(points: &[(f64, f64)]) -> Option<f64> {
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = ols(&x, &y)?;
    Some(
        points
            .iter()
            .map(|(q, v)| (v - fit.intercept - fit.slope * q).abs())
            .fold(0.0, f64::max),
    )
}
