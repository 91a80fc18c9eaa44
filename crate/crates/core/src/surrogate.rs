//! Shuffling surrogates: does multifractality survive destroying the
//! temporal order of a series?
//!
//! Each surrogate is an independent uniform permutation whose seed is
//! derived from the base seed and the surrogate's index, so the ensemble
//! runs in parallel and every member can be reproduced on its own.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::quantile_sorted;
use crate::ingest::{QuartileAssignment, ReturnSeries};
use crate::mfdfa::{mfdfa, MfdfaConfig, MfdfaError};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("invalid surrogate configuration: {0}")]
    InvalidConfig(String),
    #[error("analysis of the original series failed: {0}")]
    Original(#[source] MfdfaError),
    #[error("{failed} of {total} surrogates failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("ticker `{0}` has no quartile assignment")]
    MissingAssignment(String),
    #[error("no reports to aggregate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_shuffles: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub base_seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_shuffles: 1000,
            ci_low: 0.025,
            ci_high: 0.975,
            base_seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_shuffles < 100 {
            return Err(SurrogateError::InvalidConfig(format!(
                "need at least 100 shuffles, got {}",
                self.n_shuffles
            )));
        }
        if !(0.0 < self.ci_low && self.ci_low < self.ci_high && self.ci_high < 1.0) {
            return Err(SurrogateError::InvalidConfig(format!(
                "confidence limits ({}, {}) must satisfy 0 < low < high < 1",
                self.ci_low, self.ci_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    DeltaH,
    DeltaAlpha,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::DeltaH => "delta_h",
            Measure::DeltaAlpha => "delta_alpha",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "delta_h" => Ok(Measure::DeltaH),
            "delta_alpha" => Ok(Measure::DeltaAlpha),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTestReport {
    pub ticker: String,
    pub measure_name: Measure,
    pub original: f64,
    pub shuffled_mean: f64,
    pub cl_low: f64,
    pub cl_high: f64,
    /// Original lies outside `[cl_low, cl_high]`.
    pub flagged: bool,
}

/// Both reports for one series plus ensemble diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOutcome {
    pub delta_h: SurrogateTestReport,
    pub delta_alpha: SurrogateTestReport,
    /// Ensemble mean of `H(q)` over the successful surrogates.
    pub shuffled_mean_h_of_q: Vec<f64>,
    pub n_shuffles: usize,
    pub failed_shuffles: usize,
}

impl SurrogateOutcome {
    pub fn report(&self, m: Measure) -> &SurrogateTestReport {
        match m {
            Measure::DeltaH => &self.delta_h,
            Measure::DeltaAlpha => &self.delta_alpha,
        }
    }
}

/// Seed of surrogate number `index` in an ensemble.
pub fn surrogate_seed(base_seed: u64, index: u64) -> u64 {
    derive_seed(base_seed, index)
}

/// Uniform random permutation (Fisher-Yates). Index draws use 64-bit
/// ranges so the permutation is identical on every platform.
pub fn shuffle(series: &ReturnSeries, seed: u64) -> ReturnSeries {
    let mut values = series.values().to_vec();
    let mut rng = rng_from_seed(seed);
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        values.swap(i, j);
    }
    series.permuted(values, seed)
}

/// Builds a report; the flag is the exclusion predicate on the interval.
pub fn make_report(
    ticker: &str,
    measure: Measure,
    original: f64,
    ensemble: &[f64],
    ci_low: f64,
    ci_high: f64,
) -> SurrogateTestReport {
    let mut sorted = ensemble.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cl_low = quantile_sorted(&sorted, ci_low);
    let cl_high = quantile_sorted(&sorted, ci_high);
    SurrogateTestReport {
        ticker: ticker.to_string(),
        measure_name: measure,
        original,
        shuffled_mean: ensemble.iter().sum::<f64>() / ensemble.len() as f64,
        cl_low,
        cl_high,
        flagged: original < cl_low || original > cl_high,
    }
}

/// `(Delta H, Delta alpha, H(q))` of one surrogate.
type ShuffleRun = (f64, f64, Vec<f64>);

/// Compares `Delta H` and `Delta alpha` of the series with their
/// distribution over shuffled surrogates. More than 1% failed surrogates
/// abort the test.
pub fn surrogate_test(
    series: &ReturnSeries,
    config: &SurrogateConfig,
    mfdfa_config: &MfdfaConfig,
) -> Result<SurrogateOutcome, SurrogateError> {
    config.validate()?;
    let original = mfdfa(series, mfdfa_config).map_err(SurrogateError::Original)?;
    let runs: Vec<Result<ShuffleRun, MfdfaError>> = (0..config.n_shuffles)
        .into_par_iter()
        .map(|i| {
            let s = shuffle(series, surrogate_seed(config.base_seed, i as u64 + 1));
            mfdfa(&s, mfdfa_config).map(|r| (r.delta_h, r.delta_alpha, r.h_of_q))
        })
        .collect();

    let mut dh = Vec::with_capacity(runs.len());
    let mut da = Vec::with_capacity(runs.len());
    let mut h_sum = vec![0.0; original.q_grid.len()];
    let mut failed = 0;
    let mut first_error = None;
    for run in runs {
        match run {
            Ok((h, a, hq)) => {
                dh.push(h);
                da.push(a);
                for (acc, v) in h_sum.iter_mut().zip(&hq) {
                    *acc += v;
                }
            }
            Err(e) => {
                failed += 1;
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    if failed * 100 > config.n_shuffles || dh.is_empty() {
        return Err(SurrogateError::TooManyFailures {
            failed,
            total: config.n_shuffles,
            first: first_error.unwrap_or_default(),
        });
    }
    let ok = dh.len() as f64;
    let ticker = series.ticker();
    Ok(SurrogateOutcome {
        delta_h: make_report(
            ticker,
            Measure::DeltaH,
            original.delta_h,
            &dh,
            config.ci_low,
            config.ci_high,
        ),
        delta_alpha: make_report(
            ticker,
            Measure::DeltaAlpha,
            original.delta_alpha,
            &da,
            config.ci_low,
            config.ci_high,
        ),
        shuffled_mean_h_of_q: h_sum.into_iter().map(|s| s / ok).collect(),
        n_shuffles: config.n_shuffles,
        failed_shuffles: failed,
    })
}

/// One row of the quartile table: means of the original and shuffled
/// measures over the quartile's members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub quartile: u8,
    pub count: usize,
    pub delta_h: f64,
    pub delta_h_shuffled: f64,
    pub delta_alpha: f64,
    pub delta_alpha_shuffled: f64,
    pub flagged_delta_h: usize,
    pub flagged_delta_alpha: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRate {
    /// `None` for the whole universe.
    pub quartile: Option<u8>,
    pub count: usize,
    pub flagged_delta_h: usize,
    pub rate_delta_h: f64,
    pub flagged_delta_alpha: usize,
    pub rate_delta_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileTable {
    /// Quartiles with at least one member, in order.
    pub rows: Vec<QuartileRow>,
    /// Overall rate first, then one entry per row.
    pub flag_rates: Vec<FlagRate>,
}

/// Quartile means of the original and shuffled measures, plus flag rates.
pub fn aggregate_by_quartile(
    outcomes: &[SurrogateOutcome],
    assignments: &[QuartileAssignment],
) -> Result<QuartileTable, SurrogateError> {
    if outcomes.is_empty() {
        return Err(SurrogateError::Empty);
    }
    let quartile_of: BTreeMap<&str, u8> = assignments
        .iter()
        .map(|a| (a.ticker.as_str(), a.quartile))
        .collect();
    let mut groups: BTreeMap<u8, Vec<&SurrogateOutcome>> = BTreeMap::new();
    for o in outcomes {
        let q = quartile_of
            .get(o.delta_h.ticker.as_str())
            .ok_or_else(|| SurrogateError::MissingAssignment(o.delta_h.ticker.clone()))?;
        groups.entry(*q).or_default().push(o);
    }
    let mean = |xs: &[&SurrogateOutcome], f: &dyn Fn(&SurrogateOutcome) -> f64| {
        xs.iter().map(|o| f(o)).sum::<f64>() / xs.len() as f64
    };
    let rows: Vec<QuartileRow> = groups
        .iter()
        .map(|(q, members)| QuartileRow {
            quartile: *q,
            count: members.len(),
            delta_h: mean(members, &|o| o.delta_h.original),
            delta_h_shuffled: mean(members, &|o| o.delta_h.shuffled_mean),
            delta_alpha: mean(members, &|o| o.delta_alpha.original),
            delta_alpha_shuffled: mean(members, &|o| o.delta_alpha.shuffled_mean),
            flagged_delta_h: members.iter().filter(|o| o.delta_h.flagged).count(),
            flagged_delta_alpha: members.iter().filter(|o| o.delta_alpha.flagged).count(),
        })
        .collect();
    let rate = |quartile, count: usize, fh: usize, fa: usize| FlagRate {
        quartile,
        count,
        flagged_delta_h: fh,
        rate_delta_h: fh as f64 / count as f64,
        flagged_delta_alpha: fa,
        rate_delta_alpha: fa as f64 / count as f64,
    };
    let mut flag_rates = vec![rate(
        None,
        outcomes.len(),
        outcomes.iter().filter(|o| o.delta_h.flagged).count(),
        outcomes.iter().filter(|o| o.delta_alpha.flagged).count(),
    )];
    flag_rates.extend(rows.iter().map(|r| {
        rate(
            Some(r.quartile),
            r.count,
            r.flagged_delta_h,
            r.flagged_delta_alpha,
        )
    }));
    Ok(QuartileTable { rows, flag_rates })
}
