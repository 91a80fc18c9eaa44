//! Descriptive statistics of a return series.
//!
//! Skewness and kurtosis use 1/n central moments (`m3 / m2^1.5` and
//! `m4 / m2^2`, kurtosis non-excess). The standard deviation uses the
//! n-1 denominator. Jarque-Bera is `(n/6) (S^2 + (K-3)^2 / 4)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ReturnSeries;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 4 observations, got {0}")]
    TooShort(usize),
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("series contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub jarque_bera: f64,
}

pub fn describe(series: &ReturnSeries) -> Result<DescriptiveStats, StatsError> {
    describe_values(series.values())
}

/// Same battery as [`describe`] for a bare slice.
pub fn describe_values(values: &[f64]) -> Result<DescriptiveStats, StatsError> {
    let n = values.len();
    if n < 4 {
        return Err(StatsError::TooShort(n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let ss = m2;
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2.is_nan() || m2 <= 0.0 {
        return Err(StatsError::DegenerateSeries);
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };

    Ok(DescriptiveStats {
        n,
        mean,
        median,
        min: sorted[0],
        max: sorted[n - 1],
        std_dev: (ss / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
        jarque_bera: jb_from_moments(n, skewness, kurtosis),
    })
}

/// Jarque-Bera statistic from sample size, skewness and non-excess kurtosis.
pub fn jb_from_moments(n: usize, skewness: f64, kurtosis: f64) -> f64 {
    let excess = kurtosis - 3.0;
    n as f64 / 6.0 * (skewness * skewness + excess * excess / 4.0)
}
