//! Multifractal detrended fluctuation analysis.
//!
//! 1. profile `Y(i) = sum_{k<=i} (x_k - <x>)`
//! 2. split `Y` into `N_s = floor(n/s)` segments from the start and `N_s`
//!    more from the end
//! 3. remove a least-squares polynomial trend from each segment; `F^2(v,s)`
//!    is the mean squared residual
//! 4. `F_q(s) = { 1/(2N_s) sum_v [F^2(v,s)]^(q/2) }^(1/q)`, with the
//!    logarithmic average at `q = 0`
//! 5. `H(q)` is the slope of `ln F_q(s)` against `ln s`
//!
//! From `H(q)`: `tau(q) = q H(q) - 1`, `alpha = d tau / d q`,
//! `f(alpha) = q alpha - tau(q)`, and the widths `Delta H`, `Delta alpha`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::{ols, PolyBasis};
use crate::ingest::ReturnSeries;

/// Minimum number of scales for the log-log fit.
pub const MIN_SCALES: usize = 6;

// F^2 below this fraction of the segment's mean square is rounding noise.
const ZERO_VARIANCE_RTOL: f64 = 1e-28;

#[derive(Debug, Error, PartialEq)]
pub enum MfdfaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("series of length {len} is too short: {reason}")]
    TooShort { len: usize, reason: String },
    #[error("scale {scale} is too small for detrending order {order}")]
    ScaleTooSmall { scale: usize, order: usize },
    #[error("every segment at scale {scale} has zero variance (q={q})")]
    ZeroVarianceSegment { q: f64, scale: usize },
    #[error("need at least {MIN_SCALES} scales, got {0}")]
    TooFewScales(usize),
    #[error("log-log fit is singular for q={q}")]
    SingularFit { q: f64 },
    #[error("q grid needs at least 3 points, got {0}")]
    GridTooShort(usize),
    #[error("q grid is not uniformly spaced and increasing")]
    NonUniformGrid,
}

/// How the scales are chosen for a series of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSelection {
    /// `count` log-spaced integer scales in `[min, n/4]`, deduplicated.
    LogSpaced {
        min: usize,
        count: usize,
    },
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaConfig {
    pub q_grid: Vec<f64>,
    pub scales: ScaleSelection,
    pub detrend_order: usize,
}

impl Default for MfdfaConfig {
    fn default() -> Self {
        Self {
            q_grid: default_q_grid(),
            scales: ScaleSelection::LogSpaced { min: 10, count: 16 },
            detrend_order: 1,
        }
    }
}

/// `-4, -3.75, ..., 4`; contains `0.0` exactly.
pub fn default_q_grid() -> Vec<f64> {
    uniform_q_grid(-4.0, 4.0, 0.25)
}

/// Uniform grid `min, min + step, ..., max` built from integer multiples
/// of `step` so that grid points such as zero are exact.
pub fn uniform_q_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let lo = (min / step).round() as i64;
    let hi = (max / step).round() as i64;
    (lo..=hi).map(|i| i as f64 * step).collect()
}

/// `count` log-spaced integer scales between `min` and `n / 4`.
pub fn log_spaced_scales(n: usize, min: usize, count: usize) -> Vec<usize> {
    let max = n / 4;
    if count == 0 || max < min || min == 0 {
        return Vec::new();
    }
    if count == 1 || max == min {
        return vec![min];
    }
    let (lmin, lmax) = ((min as f64).ln(), (max as f64).ln());
    let mut scales: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((lmin + t * (lmax - lmin)).exp().round() as usize).clamp(min, max)
        })
        .collect();
    scales.dedup();
    scales
}

/// Powers of two in `[min, max]`.
pub fn dyadic_scales(min: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = min.max(1).next_power_of_two();
    while s <= max {
        out.push(s);
        s *= 2;
    }
    out
}

impl MfdfaConfig {
    pub fn resolve_scales(&self, n: usize) -> Vec<usize> {
        match &self.scales {
            ScaleSelection::LogSpaced { min, count } => log_spaced_scales(n, *min, *count),
            ScaleSelection::Explicit(s) => s.clone(),
        }
    }

    /// Checks the configuration against a series of length `n` and returns
    /// the scales to use.
    pub fn validate(&self, n: usize) -> Result<Vec<usize>, MfdfaError> {
        if self.q_grid.is_empty() {
            return Err(MfdfaError::InvalidConfig("empty q grid".into()));
        }
        if self.q_grid.iter().any(|q| !q.is_finite()) {
            return Err(MfdfaError::InvalidConfig("non-finite q".into()));
        }
        if self.q_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MfdfaError::InvalidConfig(
                "q grid must be increasing".into(),
            ));
        }
        if self.detrend_order == 0 {
            return Err(MfdfaError::InvalidConfig(
                "detrend order must be positive".into(),
            ));
        }
        let scales = self.resolve_scales(n);
        if scales.len() < MIN_SCALES {
            return Err(MfdfaError::TooFewScales(scales.len()));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MfdfaError::InvalidConfig(
                "scales must be strictly increasing".into(),
            ));
        }
        if scales[0] <= self.detrend_order + 1 {
            return Err(MfdfaError::ScaleTooSmall {
                scale: scales[0],
                order: self.detrend_order,
            });
        }
        let last = *scales.last().expect("non-empty");
        if last > n / 4 {
            return Err(MfdfaError::TooShort {
                len: n,
                reason: format!("largest scale {last} exceeds n/4"),
            });
        }
        Ok(scales)
    }
}

/// Cumulative sum of the demeaned series.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    y: Vec<f64>,
}

impl Profile {
    /// Wraps an already integrated profile.
    pub fn from_raw(y: Vec<f64>) -> Self {
        Self { y }
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The profile read backwards in time.
    pub fn reversed(&self) -> Self {
        let mut y = self.y.clone();
        y.reverse();
        Self { y }
    }
}

pub fn profile(series: &ReturnSeries) -> Profile {
    profile_of(series.values())
}

pub fn profile_of(values: &[f64]) -> Profile {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    Profile {
        y: values
            .iter()
            .map(|v| {
                acc += v - mean;
                acc
            })
            .collect(),
    }
}

/// Detrended variances `F^2(v, s)` of the `2 N_s` segments: `N_s` counted
/// from the start of the profile followed by `N_s` counted from the end.
/// Values at the rounding floor are reported as exactly zero.
pub fn segment_fluctuations(
    profile: &Profile,
    scale: usize,
    order: usize,
) -> Result<Vec<f64>, MfdfaError> {
    if scale < order + 2 {
        return Err(MfdfaError::ScaleTooSmall { scale, order });
    }
    let n = profile.len();
    if scale > n {
        return Err(MfdfaError::TooShort {
            len: n,
            reason: format!("scale {scale} exceeds series length"),
        });
    }
    let basis = PolyBasis::new(scale, order).ok_or(MfdfaError::ScaleTooSmall { scale, order })?;
    let segments = n / scale;
    let y = profile.values();
    let mut out = Vec::with_capacity(2 * segments);
    let mut residual = Vec::with_capacity(scale);
    let starts = (0..segments)
        .map(|v| v * scale)
        .chain((0..segments).map(|v| n - (v + 1) * scale));
    for start in starts {
        let seg = &y[start..start + scale];
        basis.residual_into(seg, &mut residual);
        let f2 = residual.iter().map(|r| r * r).sum::<f64>() / scale as f64;
        let ms = seg.iter().map(|v| v * v).sum::<f64>() / scale as f64;
        out.push(if f2 <= ZERO_VARIANCE_RTOL * ms {
            0.0
        } else {
            f2
        });
    }
    Ok(out)
}

/// One fluctuation-function value and the number of zero-variance
/// segments left out of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FqValue {
    pub value: f64,
    pub excluded: usize,
}

/// q-order average of segment variances. For `q <= 0`, zero-variance
/// segments are left out and counted; if every segment is zero the
/// fluctuation is undefined.
pub fn fluctuation_function(f2: &[f64], q: f64, scale: usize) -> Result<FqValue, MfdfaError> {
    let zero = MfdfaError::ZeroVarianceSegment { q, scale };
    if q > 0.0 {
        if f2.is_empty() || f2.iter().all(|v| *v == 0.0) {
            return Err(zero);
        }
        let m = f2.len() as f64;
        let value = if q == 2.0 {
            (f2.iter().sum::<f64>() / m).sqrt()
        } else {
            (f2.iter().map(|v| v.powf(q / 2.0)).sum::<f64>() / m).powf(1.0 / q)
        };
        return Ok(FqValue { value, excluded: 0 });
    }
    let kept: Vec<f64> = f2.iter().copied().filter(|v| *v > 0.0).collect();
    if kept.is_empty() {
        return Err(zero);
    }
    let excluded = f2.len() - kept.len();
    let m = kept.len() as f64;
    let value = if q == 0.0 {
        (0.5 * kept.iter().map(|v| v.ln()).sum::<f64>() / m).exp()
    } else {
        (kept.iter().map(|v| v.powf(q / 2.0)).sum::<f64>() / m).powf(1.0 / q)
    };
    Ok(FqValue { value, excluded })
}

/// `F_q(s)` over a grid of q and scales.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSurface {
    pub q_grid: Vec<f64>,
    pub scales: Vec<usize>,
    /// `fq[i][j]` is `F_{q_i}(s_j)`.
    pub fq: Vec<Vec<f64>>,
    /// Segment variances per scale.
    pub segment_variances: Vec<Vec<f64>>,
    /// Zero-variance segments left out, summed over the grid.
    pub excluded_segments: usize,
}

pub fn fluctuation_surface(
    profile: &Profile,
    scales: &[usize],
    q_grid: &[f64],
    order: usize,
) -> Result<FluctuationSurface, MfdfaError> {
    let mut fq = vec![Vec::with_capacity(scales.len()); q_grid.len()];
    let mut segment_variances = Vec::with_capacity(scales.len());
    let mut excluded_segments = 0;
    for &s in scales {
        let f2 = segment_fluctuations(profile, s, order)?;
        for (row, &q) in fq.iter_mut().zip(q_grid) {
            let v = fluctuation_function(&f2, q, s)?;
            excluded_segments += v.excluded;
            row.push(v.value);
        }
        segment_variances.push(f2);
    }
    Ok(FluctuationSurface {
        q_grid: q_grid.to_vec(),
        scales: scales.to_vec(),
        fq,
        segment_variances,
        excluded_segments,
    })
}

/// Per-q OLS slope of `ln F_q(s)` on `ln s`, with the fit's R^2.
pub fn hurst_from_scaling(
    fq: &[Vec<f64>],
    q_grid: &[f64],
    scales: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), MfdfaError> {
    if scales.len() < MIN_SCALES {
        return Err(MfdfaError::TooFewScales(scales.len()));
    }
    let x: Vec<f64> = scales.iter().map(|s| (*s as f64).ln()).collect();
    let mut h = Vec::with_capacity(q_grid.len());
    let mut r2 = Vec::with_capacity(q_grid.len());
    for (row, &q) in fq.iter().zip(q_grid) {
        if row.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(MfdfaError::SingularFit { q });
        }
        let y: Vec<f64> = row.iter().map(|v| v.ln()).collect();
        let fit = ols(&x, &y).ok_or(MfdfaError::SingularFit { q })?;
        h.push(fit.slope);
        r2.push(fit.r2);
    }
    Ok((h, r2))
}

/// `tau(q) = q H(q) - 1`.
pub fn mass_exponent(q_grid: &[f64], h_of_q: &[f64]) -> Vec<f64> {
    q_grid
        .iter()
        .zip(h_of_q)
        .map(|(q, h)| q * h - 1.0)
        .collect()
}

/// Legendre transform of `tau(q)` on a uniform increasing grid: central
/// differences inside, one-sided differences at the two ends.
pub fn legendre_spectrum(
    tau_of_q: &[f64],
    q_grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), MfdfaError> {
    let m = q_grid.len();
    if m < 3 || tau_of_q.len() != m {
        return Err(MfdfaError::GridTooShort(m));
    }
    let step = q_grid[1] - q_grid[0];
    if step.is_nan()
        || step <= 0.0
        || q_grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step)
    {
        return Err(MfdfaError::NonUniformGrid);
    }
    let mut alpha = Vec::with_capacity(m);
    alpha.push((tau_of_q[1] - tau_of_q[0]) / step);
    for i in 1..m - 1 {
        alpha.push((tau_of_q[i + 1] - tau_of_q[i - 1]) / (2.0 * step));
    }
    alpha.push((tau_of_q[m - 1] - tau_of_q[m - 2]) / step);
    let f_alpha = q_grid
        .iter()
        .zip(&alpha)
        .zip(tau_of_q)
        .map(|((q, a), t)| q * a - t)
        .collect();
    Ok((alpha, f_alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaResult {
    pub q_grid: Vec<f64>,
    pub scales: Vec<usize>,
    pub detrend_order: usize,
    pub h_of_q: Vec<f64>,
    pub fit_r2: Vec<f64>,
    pub tau_of_q: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub delta_h: f64,
    pub delta_alpha: f64,
    /// Zero-variance segments left out of negative/zero-order averages.
    pub excluded_segments: usize,
    /// Fit-quality diagnostics that did not abort the analysis.
    pub warnings: Vec<String>,
}

impl MfdfaResult {
    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q_grid
            .iter()
            .position(|g| (g - q).abs() < 1e-9)
            .map(|i| self.h_of_q[i])
    }
}

fn range(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    hi - lo
}

/// `(Delta H, Delta alpha)`: max minus min of `H(q)` and of `alpha` over the grid.
pub fn multifractality_measures(result: &MfdfaResult) -> (f64, f64) {
    (range(&result.h_of_q), range(&result.alpha))
}

/// Full pipeline on one series.
pub fn mfdfa(series: &ReturnSeries, config: &MfdfaConfig) -> Result<MfdfaResult, MfdfaError> {
    mfdfa_values(series.values(), config)
}

pub fn mfdfa_values(values: &[f64], config: &MfdfaConfig) -> Result<MfdfaResult, MfdfaError> {
    let scales = config.validate(values.len())?;
    if config.q_grid.len() < 3 {
        return Err(MfdfaError::GridTooShort(config.q_grid.len()));
    }
    let prof = profile_of(values);
    let surface = fluctuation_surface(&prof, &scales, &config.q_grid, config.detrend_order)?;
    let (h_of_q, fit_r2) = hurst_from_scaling(&surface.fq, &config.q_grid, &scales)?;
    let tau_of_q = mass_exponent(&config.q_grid, &h_of_q);
    let (alpha, f_alpha) = legendre_spectrum(&tau_of_q, &config.q_grid)?;

    let mut result = MfdfaResult {
        q_grid: config.q_grid.clone(),
        scales,
        detrend_order: config.detrend_order,
        h_of_q,
        fit_r2,
        tau_of_q,
        alpha,
        f_alpha,
        delta_h: 0.0,
        delta_alpha: 0.0,
        excluded_segments: surface.excluded_segments,
        warnings: Vec::new(),
    };
    let (dh, da) = multifractality_measures(&result);
    result.delta_h = dh;
    result.delta_alpha = da;
    result.warnings = diagnostics(&result);
    Ok(result)
}

fn diagnostics(r: &MfdfaResult) -> Vec<String> {
    let mut out = Vec::new();
    let rises = r.h_of_q.windows(2).filter(|w| w[1] - w[0] > 1e-6).count();
    if rises > 0 {
        out.push(format!("H(q) increases at {rises} grid step(s)"));
    }
    if r.delta_alpha < r.delta_h {
        out.push(format!(
            "delta_alpha {:.4} is below delta_h {:.4}",
            r.delta_alpha, r.delta_h
        ));
    }
    if r.excluded_segments > 0 {
        out.push(format!(
            "{} zero-variance segment(s) left out of q <= 0 averages",
            r.excluded_segments
        ));
    }
    out
}
