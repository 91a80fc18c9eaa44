//! Synthetic processes with known scaling: fractional Gaussian noise and
//! its cumulative sum, i.i.d. Gaussian noise, and a binomial multiplicative
//! cascade whose generalized Hurst exponents are known in closed form.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ReturnSeries;
use crate::seed::{derive_seed, rng_from_seed};

/// Length used for benchmark series, matching the empirical sample size.
pub const BENCHMARK_LEN: usize = 789;

const MIN_LEN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("hurst exponent must lie in (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("cascade weight must lie in (0.5, 1), got {0}")]
    InvalidCascadeWeight(f64),
    #[error("series length must be at least {MIN_LEN}, got {0}")]
    TooShort(usize),
    #[error("cascade length must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("spec is for `{found:?}`, generator expects `{expected:?}`")]
    WrongKind {
        expected: SynthKind,
        found: SynthKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Fgn,
    Fbm,
    GaussianWhite,
    BinomialCascade,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Fgn => "fgn",
            SynthKind::Fbm => "fbm",
            SynthKind::GaussianWhite => "gaussian_white",
            SynthKind::BinomialCascade => "binomial_cascade",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fgn" => Ok(SynthKind::Fgn),
            "fbm" => Ok(SynthKind::Fbm),
            "gaussian_white" | "white" => Ok(SynthKind::GaussianWhite),
            "binomial_cascade" | "cascade" => Ok(SynthKind::BinomialCascade),
            other => Err(format!("unknown process kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    /// Used by `fgn` and `fbm`.
    pub hurst: f64,
    /// Used by `binomial_cascade`.
    pub cascade_weight: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn fgn(n: usize, hurst: f64, seed: u64) -> Self {
        Self {
            kind: SynthKind::Fgn,
            n,
            hurst,
            cascade_weight: 0.75,
            seed,
        }
    }

    pub fn fbm(n: usize, hurst: f64, seed: u64) -> Self {
        Self {
            kind: SynthKind::Fbm,
            ..Self::fgn(n, hurst, seed)
        }
    }

    pub fn gaussian_white(n: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::GaussianWhite,
            ..Self::fgn(n, 0.5, seed)
        }
    }

    pub fn binomial_cascade(n: usize, weight: f64, seed: u64) -> Self {
        Self {
            kind: SynthKind::BinomialCascade,
            n,
            hurst: 0.5,
            cascade_weight: weight,
            seed,
        }
    }

    fn check(&self, expected: SynthKind) -> Result<(), SynthError> {
        if self.kind != expected {
            return Err(SynthError::WrongKind {
                expected,
                found: self.kind,
            });
        }
        if self.n < MIN_LEN {
            return Err(SynthError::TooShort(self.n));
        }
        match self.kind {
            SynthKind::Fgn | SynthKind::Fbm => {
                if !(self.hurst > 0.0 && self.hurst < 1.0) {
                    return Err(SynthError::InvalidHurst(self.hurst));
                }
            }
            SynthKind::BinomialCascade => {
                if !self.n.is_power_of_two() {
                    return Err(SynthError::NotPowerOfTwo(self.n));
                }
                let a = self.cascade_weight;
                if !(a > 0.5 && a < 1.0) {
                    return Err(SynthError::InvalidCascadeWeight(a));
                }
            }
            SynthKind::GaussianWhite => {}
        }
        Ok(())
    }
}

/// Generates the process named by `spec.kind`.
pub fn generate(spec: &SynthSpec) -> Result<ReturnSeries, SynthError> {
    match spec.kind {
        SynthKind::Fgn => generate_fgn(spec),
        SynthKind::Fbm => generate_fbm(spec),
        SynthKind::GaussianWhite => generate_gaussian_white(spec),
        SynthKind::BinomialCascade => generate_binomial_cascade(spec),
    }
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Fractional Gaussian noise with unit variance. Uses circulant embedding
/// of the exact covariance; falls back to the sequential Durbin-Levinson
/// recursion if the embedding has a negative eigenvalue.
pub fn generate_fgn(spec: &SynthSpec) -> Result<ReturnSeries, SynthError> {
    spec.check(SynthKind::Fgn)?;
    let values = fgn_values(spec.n, spec.hurst, spec.seed);
    Ok(series(SynthKind::Fgn, values))
}

/// Fractional Brownian motion `B(1..=n)` with `B(0) = 0` implied, so that
/// the first differences (taking `B(0) = 0`) are exactly the fGn drawn
/// from the same seed.
pub fn generate_fbm(spec: &SynthSpec) -> Result<ReturnSeries, SynthError> {
    spec.check(SynthKind::Fbm)?;
    let mut acc = 0.0;
    let values = fgn_values(spec.n, spec.hurst, spec.seed)
        .into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    Ok(series(SynthKind::Fbm, values))
}

pub fn generate_gaussian_white(spec: &SynthSpec) -> Result<ReturnSeries, SynthError> {
    spec.check(SynthKind::GaussianWhite)?;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0));
    let values = (0..spec.n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(series(SynthKind::GaussianWhite, values))
}

/// Binomial multiplicative cascade on `n = 2^k` cells. At every split one
/// child receives the fraction `a` of its parent's mass and the other
/// `1 - a`; which child gets `a` is drawn from a dedicated sub-stream of
/// the seed. The cell masses sum to one.
pub fn generate_binomial_cascade(spec: &SynthSpec) -> Result<ReturnSeries, SynthError> {
    spec.check(SynthKind::BinomialCascade)?;
    let levels = spec.n.trailing_zeros();
    let a = spec.cascade_weight;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));
    let mut mass = vec![1.0];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(mass.len() * 2);
        for m in &mass {
            let left = if rng.random::<bool>() { a } else { 1.0 - a };
            next.push(m * left);
            next.push(m * (1.0 - left));
        }
        mass = next;
    }
    Ok(series(SynthKind::BinomialCascade, mass))
}

/// Deterministic binomial measure (left child always receives `a`).
pub fn binomial_measure(levels: u32, a: f64) -> Vec<f64> {
    let mut mass = vec![1.0];
    for _ in 0..levels {
        mass = mass.iter().flat_map(|m| [m * a, m * (1.0 - a)]).collect();
    }
    mass
}

/// Closed-form generalized Hurst exponent of the binomial cascade,
/// `1/q - ln(a^q + (1-a)^q) / (q ln 2)`, with its limit at `q = 0`.
pub fn cascade_hurst(a: f64, q: f64) -> f64 {
    let b = 1.0 - a;
    if q == 0.0 {
        return -(a.ln() + b.ln()) / (2.0 * LN_2);
    }
    1.0 / q - (a.powf(q) + b.powf(q)).ln() / (q * LN_2)
}

/// Mass exponent `q H(q) - 1 = -log2(a^q + (1-a)^q)` of the cascade.
pub fn cascade_tau(a: f64, q: f64) -> f64 {
    -(a.powf(q) + (1.0 - a).powf(q)).log2()
}

/// Singularity strength `d tau / d q` of the cascade.
pub fn cascade_alpha(a: f64, q: f64) -> f64 {
    let b = 1.0 - a;
    let (aq, bq) = (a.powf(q), b.powf(q));
    -(aq * a.ln() + bq * b.ln()) / ((aq + bq) * LN_2)
}

fn series(kind: SynthKind, values: Vec<f64>) -> ReturnSeries {
    // generators only produce finite values
    ReturnSeries::new(kind.name(), values).expect("finite synthetic values")
}

fn fgn_values(n: usize, hurst: f64, seed: u64) -> Vec<f64> {
    let seed = derive_seed(seed, 0);
    match circulant_fgn(n, hurst, seed) {
        Some(v) => v,
        None => {
            log::debug!("circulant embedding not positive for H={hurst}, n={n}; using recursion");
            hosking_fgn(n, hurst, seed)
        }
    }
}

/// Exact fGn by circulant embedding (Davies-Harte / Wood-Chan). Returns
/// `None` when the embedding spectrum has a significantly negative entry.
pub fn circulant_fgn(n: usize, hurst: f64, seed: u64) -> Option<Vec<f64>> {
    if n < 2 {
        return Some(hosking_fgn(n, hurst, seed));
    }
    let m = 2 * (n - 1);
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j < n { j } else { m - j };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut sqrt_lambda = Vec::with_capacity(m);
    for c in &row {
        let lambda = c.re;
        if lambda < -1e-10 * max {
            return None;
        }
        sqrt_lambda.push((lambda.max(0.0) / m as f64).sqrt());
    }
    let mut rng = rng_from_seed(seed);
    let mut w: Vec<Complex<f64>> = sqrt_lambda
        .iter()
        .map(|s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re * s, im * s)
        })
        .collect();
    fft.process(&mut w);
    Some(w.iter().take(n).map(|c| c.re).collect())
}

/// Exact fGn by the sequential conditional-Gaussian (Durbin-Levinson)
/// recursion. O(n^2).
pub fn hosking_fgn(n: usize, hurst: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, k)).collect();
    let mut x = Vec::with_capacity(n);
    if n == 0 {
        return x;
    }
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = Vec::with_capacity(n);
    let mut v = gamma[0];
    let z: f64 = rng.sample(StandardNormal);
    x.push(v.sqrt() * z);
    for t in 1..n {
        let mut num = gamma[t];
        for j in 1..t {
            num -= prev[j - 1] * gamma[t - j];
        }
        let kappa = num / v;
        phi.clear();
        for j in 1..t {
            phi.push(prev[j - 1] - kappa * prev[t - j - 1]);
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        let mean: f64 = (1..=t).map(|j| phi[j - 1] * x[t - j]).sum();
        let z: f64 = rng.sample(StandardNormal);
        x.push(mean + v.max(0.0).sqrt() * z);
        std::mem::swap(&mut phi, &mut prev);
    }
    x
}
