//! Report tables: row types, CSV/JSON rendering and the self-check that
//! re-derives every aggregate from the per-ticker tables.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PipelineError, TickerFailure, TickerRecord};
use crate::ingest::QuartileAssignment;
use crate::stats::{describe_values, DescriptiveStats, StatsError};
use crate::surrogate::{
    aggregate_by_quartile, FlagRate, Measure, QuartileRow, QuartileTable, SurrogateOutcome,
    SurrogateTestReport,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const DESCRIPTIVE_STATS: &str = "descriptive_stats";
pub const GHE_HURST: &str = "ghe_hurst";
pub const GHE_QHQ: &str = "ghe_qhq";
pub const GHE_QHQ_BY_QUARTILE: &str = "ghe_qhq_by_quartile";
pub const MFDFA_SUMMARY: &str = "mfdfa_summary";
pub const SURROGATE_DELTA_H: &str = "surrogate_delta_h";
pub const SURROGATE_DELTA_ALPHA: &str = "surrogate_delta_alpha";
pub const TABLE1_SUMMARY: &str = "table1_summary";
pub const TABLE2_QUARTILES: &str = "table2_quartiles";
pub const FLAG_RATES: &str = "flag_rates";
pub const FAILURES: &str = "failures";

const SELF_CHECK_TOL: f64 = 1e-12;

/// JSON wrapper shared by every table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<R> {
    pub schema: String,
    pub schema_version: u32,
    pub seed: u64,
    pub rows: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub ticker: String,
    #[serde(flatten)]
    pub stats: DescriptiveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstRow {
    pub ticker: String,
    pub quartile: u8,
    pub log_volume: f64,
    pub h1: f64,
    pub h2: f64,
    pub h1_stderr: f64,
    pub h2_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhqRow {
    pub ticker: String,
    pub q: f64,
    pub h: f64,
    pub qhq: f64,
    pub h_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaRow {
    pub ticker: String,
    pub quartile: u8,
    pub h2: Option<f64>,
    pub delta_h: f64,
    pub delta_alpha: f64,
    pub excluded_segments: usize,
    pub warnings: usize,
}

/// One column of the universe summary: descriptive statistics of a
/// per-ticker quantity across tickers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryColumn {
    pub label: String,
    pub obs: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std_dev: f64,
    /// `None` when the column has no spread or fewer than four values.
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub jarque_bera: Option<f64>,
}

pub fn stats_rows(records: &[TickerRecord]) -> Vec<StatsRow> {
    records
        .iter()
        .map(|r| StatsRow {
            ticker: r.ticker.clone(),
            stats: r.stats.clone(),
        })
        .collect()
}

pub fn hurst_rows(records: &[TickerRecord]) -> Vec<HurstRow> {
    records
        .iter()
        .map(|r| {
            let se = |q: f64| {
                r.ghe
                    .q_grid
                    .iter()
                    .position(|g| (g - q).abs() < 1e-9)
                    .map_or(f64::NAN, |i| r.ghe.h_stderr[i])
            };
            HurstRow {
                ticker: r.ticker.clone(),
                quartile: r.quartile,
                log_volume: r.mean_log_volume,
                h1: r.h1,
                h2: r.h2,
                h1_stderr: se(1.0),
                h2_stderr: se(2.0),
            }
        })
        .collect()
}

pub fn qhq_rows(records: &[TickerRecord]) -> Vec<QhqRow> {
    records
        .iter()
        .flat_map(|r| {
            let g = &r.ghe;
            (0..g.q_grid.len()).map(move |i| QhqRow {
                ticker: r.ticker.clone(),
                q: g.q_grid[i],
                h: g.h_of_q[i],
                qhq: g.qhq[i],
                h_stderr: g.h_stderr[i],
            })
        })
        .collect()
}

pub fn mfdfa_rows(records: &[TickerRecord]) -> Vec<MfdfaRow> {
    records
        .iter()
        .map(|r| MfdfaRow {
            ticker: r.ticker.clone(),
            quartile: r.quartile,
            h2: r.mfdfa.h_at(2.0),
            delta_h: r.mfdfa.delta_h,
            delta_alpha: r.mfdfa.delta_alpha,
            excluded_segments: r.mfdfa.excluded_segments,
            warnings: r.mfdfa.warnings.len(),
        })
        .collect()
}

pub fn surrogate_rows(records: &[TickerRecord], m: Measure) -> Vec<SurrogateTestReport> {
    records
        .iter()
        .map(|r| r.surrogate.report(m).clone())
        .collect()
}

pub fn summary_column(label: &str, values: &[f64]) -> SummaryColumn {
    match describe_values(values) {
        Ok(d) => SummaryColumn {
            label: label.to_string(),
            obs: d.n,
            mean: d.mean,
            median: d.median,
            min: d.min,
            max: d.max,
            std_dev: d.std_dev,
            skewness: Some(d.skewness),
            kurtosis: Some(d.kurtosis),
            jarque_bera: Some(d.jarque_bera),
        },
        Err(StatsError::TooShort(_) | StatsError::DegenerateSeries) if !values.is_empty() => {
            let n = values.len();
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / n as f64;
            let std_dev = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryColumn {
                label: label.to_string(),
                obs: n,
                mean,
                median: crate::fit::quantile_sorted(&sorted, 0.5),
                min: sorted[0],
                max: sorted[n - 1],
                std_dev,
                skewness: None,
                kurtosis: None,
                jarque_bera: None,
            }
        }
        Err(_) => SummaryColumn {
            label: label.to_string(),
            obs: values.len(),
            mean: f64::NAN,
            median: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            std_dev: f64::NAN,
            skewness: None,
            kurtosis: None,
            jarque_bera: None,
        },
    }
}

pub fn table1(hurst: &[HurstRow]) -> Vec<SummaryColumn> {
    let col = |f: fn(&HurstRow) -> f64| hurst.iter().map(f).collect::<Vec<f64>>();
    vec![
        summary_column("Log vol.", &col(|r| r.log_volume)),
        summary_column("H(q=1)", &col(|r| r.h1)),
        summary_column("H(q=2)", &col(|r| r.h2)),
    ]
}

pub fn table2(
    records: &[TickerRecord],
    assignments: &[QuartileAssignment],
) -> Result<QuartileTable, PipelineError> {
    let outcomes: Vec<SurrogateOutcome> = records.iter().map(|r| r.surrogate.clone()).collect();
    aggregate_by_quartile(&outcomes, assignments)
        .map_err(|e| PipelineError::Aggregate(e.to_string()))
}

/// A rendered table: CSV text and its JSON twin.
pub struct Rendered {
    pub stem: &'static str,
    pub csv: String,
    pub json: String,
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn quartile_label(q: Option<u8>) -> String {
    q.map_or_else(|| "All".to_string(), |q| format!("Quartile {q}"))
}

fn to_csv(seed: u64, header: &[String], rows: &[Vec<String>]) -> Result<String, PipelineError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let io = |e: csv::Error| PipelineError::Render(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let body = w
        .into_inner()
        .map_err(|e| PipelineError::Render(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| PipelineError::Render(e.to_string()))?;
    Ok(format!(
        "# schema_version: {SCHEMA_VERSION}\n# seed: {seed}\n{body}"
    ))
}

fn to_json<T: Serialize>(stem: &str, seed: u64, rows: &[T]) -> Result<String, PipelineError> {
    let env = Envelope {
        schema: format!("fractal-report/{stem}"),
        schema_version: SCHEMA_VERSION,
        seed,
        rows,
    };
    let mut s =
        serde_json::to_string_pretty(&env).map_err(|e| PipelineError::Render(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn render<T: Serialize>(
    stem: &'static str,
    seed: u64,
    header: &[&str],
    rows: &[T],
    cells: impl Fn(&T) -> Vec<String>,
) -> Result<Rendered, PipelineError> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows.iter().map(cells).collect();
    Ok(Rendered {
        stem,
        csv: to_csv(seed, &header, &body)?,
        json: to_json(stem, seed, rows)?,
    })
}

pub fn render_stats(seed: u64, rows: &[StatsRow]) -> Result<Rendered, PipelineError> {
    render(
        DESCRIPTIVE_STATS,
        seed,
        &[
            "Crypto",
            "Obs.",
            "Mean",
            "Median",
            "Min",
            "Max",
            "Std. Dev.",
            "Skewness",
            "Kurtosis",
            "Jarque-Bera",
        ],
        rows,
        |r| {
            let s = &r.stats;
            vec![
                r.ticker.clone(),
                s.n.to_string(),
                fmt(s.mean),
                fmt(s.median),
                fmt(s.min),
                fmt(s.max),
                fmt(s.std_dev),
                fmt(s.skewness),
                fmt(s.kurtosis),
                fmt(s.jarque_bera),
            ]
        },
    )
}

pub fn render_hurst(seed: u64, rows: &[HurstRow]) -> Result<Rendered, PipelineError> {
    render(
        GHE_HURST,
        seed,
        &[
            "Crypto",
            "Quartile",
            "Log vol.",
            "H(q=1)",
            "H(q=2)",
            "SE H(q=1)",
            "SE H(q=2)",
        ],
        rows,
        |r| {
            vec![
                r.ticker.clone(),
                r.quartile.to_string(),
                fmt(r.log_volume),
                fmt(r.h1),
                fmt(r.h2),
                fmt(r.h1_stderr),
                fmt(r.h2_stderr),
            ]
        },
    )
}

pub fn render_qhq(seed: u64, rows: &[QhqRow]) -> Result<Rendered, PipelineError> {
    render(
        GHE_QHQ,
        seed,
        &["Crypto", "q", "H(q)", "qH(q)", "SE H(q)"],
        rows,
        |r| {
            vec![
                r.ticker.clone(),
                fmt(r.q),
                fmt(r.h),
                fmt(r.qhq),
                fmt(r.h_stderr),
            ]
        },
    )
}

/// qH(q) averaged over the members of one volume quartile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhqCurveRow {
    pub quartile: u8,
    pub q: f64,
    pub qhq: f64,
    pub members: usize,
}

pub fn render_qhq_curve(seed: u64, rows: &[QhqCurveRow]) -> Result<Rendered, PipelineError> {
    render(
        GHE_QHQ_BY_QUARTILE,
        seed,
        &["Quartile", "q", "qH(q)", "Obs."],
        rows,
        |r| {
            vec![
                quartile_label(Some(r.quartile)),
                fmt(r.q),
                fmt(r.qhq),
                r.members.to_string(),
            ]
        },
    )
}

pub fn render_mfdfa(seed: u64, rows: &[MfdfaRow]) -> Result<Rendered, PipelineError> {
    render(
        MFDFA_SUMMARY,
        seed,
        &[
            "Crypto",
            "Quartile",
            "H(q=2)",
            "Delta H",
            "Delta alpha",
            "Excluded segments",
            "Warnings",
        ],
        rows,
        |r| {
            vec![
                r.ticker.clone(),
                r.quartile.to_string(),
                fmt_opt(r.h2),
                fmt(r.delta_h),
                fmt(r.delta_alpha),
                r.excluded_segments.to_string(),
                r.warnings.to_string(),
            ]
        },
    )
}

pub fn render_surrogate(
    seed: u64,
    measure: Measure,
    ci: (f64, f64),
    rows: &[SurrogateTestReport],
) -> Result<Rendered, PipelineError> {
    let (stem, label) = match measure {
        Measure::DeltaH => (SURROGATE_DELTA_H, "Delta H"),
        Measure::DeltaAlpha => (SURROGATE_DELTA_ALPHA, "Delta alpha"),
    };
    let shuffled = format!("{label}_shuffled");
    let lo = format!("CL_{}", ci.0);
    let hi = format!("CL_{}", ci.1);
    render(
        stem,
        seed,
        &["Crypto", label, &shuffled, &lo, &hi, "Significant"],
        rows,
        |r| {
            vec![
                r.ticker.clone(),
                fmt(r.original),
                fmt(r.shuffled_mean),
                fmt(r.cl_low),
                fmt(r.cl_high),
                if r.flagged { "*".into() } else { String::new() },
            ]
        },
    )
}

pub fn render_table1(seed: u64, cols: &[SummaryColumn]) -> Result<Rendered, PipelineError> {
    let mut header = vec!["Statistic".to_string()];
    header.extend(cols.iter().map(|c| c.label.clone()));
    let line = |name: &str, f: &dyn Fn(&SummaryColumn) -> String| {
        let mut row = vec![name.to_string()];
        row.extend(cols.iter().map(f));
        row
    };
    let body = vec![
        line("Obs.", &|c| c.obs.to_string()),
        line("Mean", &|c| fmt(c.mean)),
        line("Median", &|c| fmt(c.median)),
        line("Min", &|c| fmt(c.min)),
        line("Max", &|c| fmt(c.max)),
        line("Std. Dev.", &|c| fmt(c.std_dev)),
        line("Skewness", &|c| fmt_opt(c.skewness)),
        line("Kurtosis", &|c| fmt_opt(c.kurtosis)),
        line("Jarque-Bera", &|c| fmt_opt(c.jarque_bera)),
    ];
    Ok(Rendered {
        stem: TABLE1_SUMMARY,
        csv: to_csv(seed, &header, &body)?,
        json: to_json(TABLE1_SUMMARY, seed, cols)?,
    })
}

pub fn render_table2(seed: u64, rows: &[QuartileRow]) -> Result<Rendered, PipelineError> {
    render(
        TABLE2_QUARTILES,
        seed,
        &[
            "Quartile",
            "Delta H",
            "Delta H_shuffled",
            "Delta alpha",
            "Delta alpha_shuffled",
            "Obs.",
        ],
        rows,
        |r| {
            vec![
                quartile_label(Some(r.quartile)),
                fmt(r.delta_h),
                fmt(r.delta_h_shuffled),
                fmt(r.delta_alpha),
                fmt(r.delta_alpha_shuffled),
                r.count.to_string(),
            ]
        },
    )
}

pub fn render_flag_rates(seed: u64, rows: &[FlagRate]) -> Result<Rendered, PipelineError> {
    render(
        FLAG_RATES,
        seed,
        &[
            "Group",
            "Obs.",
            "Flagged Delta H",
            "Rate Delta H",
            "Flagged Delta alpha",
            "Rate Delta alpha",
        ],
        rows,
        |r| {
            vec![
                quartile_label(r.quartile),
                r.count.to_string(),
                r.flagged_delta_h.to_string(),
                fmt(r.rate_delta_h),
                r.flagged_delta_alpha.to_string(),
                fmt(r.rate_delta_alpha),
            ]
        },
    )
}

pub fn render_failures(seed: u64, rows: &[TickerFailure]) -> Result<Rendered, PipelineError> {
    render(FAILURES, seed, &["Crypto", "Stage", "Error"], rows, |r| {
        vec![r.ticker.clone(), r.stage.clone(), r.message.clone()]
    })
}

fn read_rows<T: DeserializeOwned>(dir: &Path, stem: &str) -> Result<Vec<T>, PipelineError> {
    let path = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Io {
        path: path.clone(),
        source: e,
    })?;
    let env: Envelope<Vec<T>> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::SelfCheck(format!("{}: {e}", path.display())))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(PipelineError::SelfCheck(format!(
            "{}: schema version {} (expected {SCHEMA_VERSION})",
            path.display(),
            env.schema_version
        )));
    }
    Ok(env.rows)
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= SELF_CHECK_TOL
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

fn mismatch(what: &str) -> PipelineError {
    PipelineError::SelfCheck(format!("{what} does not match the per-ticker records"))
}

/// Re-derives the summary, quartile and flag-rate tables from the emitted
/// per-ticker tables and compares them to the emitted aggregates.
pub fn self_check(dir: &Path) -> Result<(), PipelineError> {
    let hurst: Vec<HurstRow> = read_rows(dir, GHE_HURST)?;
    let dh: Vec<SurrogateTestReport> = read_rows(dir, SURROGATE_DELTA_H)?;
    let da: Vec<SurrogateTestReport> = read_rows(dir, SURROGATE_DELTA_ALPHA)?;
    let emitted_t1: Vec<SummaryColumn> = read_rows(dir, TABLE1_SUMMARY)?;
    let emitted_t2: Vec<QuartileRow> = read_rows(dir, TABLE2_QUARTILES)?;
    let emitted_rates: Vec<FlagRate> = read_rows(dir, FLAG_RATES)?;

    let t1 = table1(&hurst);
    if t1.len() != emitted_t1.len()
        || t1.iter().zip(&emitted_t1).any(|(a, b)| {
            a.label != b.label
                || a.obs != b.obs
                || ![
                    (a.mean, b.mean),
                    (a.median, b.median),
                    (a.min, b.min),
                    (a.max, b.max),
                    (a.std_dev, b.std_dev),
                ]
                .iter()
                .all(|(x, y)| close(*x, *y))
                || !close_opt(a.skewness, b.skewness)
                || !close_opt(a.kurtosis, b.kurtosis)
                || !close_opt(a.jarque_bera, b.jarque_bera)
        })
    {
        return Err(mismatch(TABLE1_SUMMARY));
    }

    if dh.len() != hurst.len() || da.len() != hurst.len() {
        return Err(mismatch("surrogate tables"));
    }
    let assignments: Vec<QuartileAssignment> = hurst
        .iter()
        .map(|r| QuartileAssignment {
            ticker: r.ticker.clone(),
            mean_log_volume: r.log_volume,
            quartile: r.quartile,
        })
        .collect();
    let outcomes: Vec<SurrogateOutcome> = dh
        .into_iter()
        .zip(da)
        .map(|(delta_h, delta_alpha)| SurrogateOutcome {
            delta_h,
            delta_alpha,
            shuffled_mean_h_of_q: Vec::new(),
            n_shuffles: 0,
            failed_shuffles: 0,
        })
        .collect();
    if outcomes.iter().any(|o| {
        o.delta_h.ticker != o.delta_alpha.ticker
            || o.delta_h.flagged
                != (o.delta_h.original < o.delta_h.cl_low || o.delta_h.original > o.delta_h.cl_high)
            || o.delta_alpha.flagged
                != (o.delta_alpha.original < o.delta_alpha.cl_low
                    || o.delta_alpha.original > o.delta_alpha.cl_high)
    }) {
        return Err(mismatch("surrogate flags"));
    }
    let table = aggregate_by_quartile(&outcomes, &assignments)
        .map_err(|e| PipelineError::SelfCheck(e.to_string()))?;
    let rows_ok = table.rows.len() == emitted_t2.len()
        && table.rows.iter().zip(&emitted_t2).all(|(a, b)| {
            a.quartile == b.quartile
                && a.count == b.count
                && a.flagged_delta_h == b.flagged_delta_h
                && a.flagged_delta_alpha == b.flagged_delta_alpha
                && close(a.delta_h, b.delta_h)
                && close(a.delta_h_shuffled, b.delta_h_shuffled)
                && close(a.delta_alpha, b.delta_alpha)
                && close(a.delta_alpha_shuffled, b.delta_alpha_shuffled)
        });
    if !rows_ok {
        return Err(mismatch(TABLE2_QUARTILES));
    }
    let rates_ok = table.flag_rates.len() == emitted_rates.len()
        && table.flag_rates.iter().zip(&emitted_rates).all(|(a, b)| {
            a.quartile == b.quartile
                && a.count == b.count
                && a.flagged_delta_h == b.flagged_delta_h
                && a.flagged_delta_alpha == b.flagged_delta_alpha
                && close(a.rate_delta_h, b.rate_delta_h)
                && close(a.rate_delta_alpha, b.rate_delta_alpha)
        });
    if !rates_ok {
        return Err(mismatch(FLAG_RATES));
    }
    Ok(())
}
