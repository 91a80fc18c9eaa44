//! Data behind the figures: scatter points, per-quartile densities and
//! quartile-averaged curves, written as CSV with `#` metadata lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TickerRecord;
use crate::ghe::{estimate_hurst, GheConfig};
use crate::mfdfa::{mfdfa, MfdfaConfig};
use crate::seed::{derive_seed, derive_seed_str};
use crate::synth::{generate, SynthSpec};

/// Points on each density grid.
pub const DENSITY_POINTS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum FigureError {
    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),
    #[error("no results to plot")]
    EmptyResults,
    #[error("benchmark simulation failed: {0}")]
    Benchmark(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    HurstVsVolumeQ1,
    HurstVsVolumeQ2,
    QhqByQuartile,
    QhqShuffledByQuartile,
    KurtosisVsDeltaH,
    KurtosisVsDeltaAlpha,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        FigureId::HurstVsVolumeQ1,
        FigureId::HurstVsVolumeQ2,
        FigureId::QhqByQuartile,
        FigureId::QhqShuffledByQuartile,
        FigureId::KurtosisVsDeltaH,
        FigureId::KurtosisVsDeltaAlpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::HurstVsVolumeQ1 => "hurst_vs_volume_q1",
            FigureId::HurstVsVolumeQ2 => "hurst_vs_volume_q2",
            FigureId::QhqByQuartile => "qhq_by_quartile",
            FigureId::QhqShuffledByQuartile => "qhq_shuffled_by_quartile",
            FigureId::KurtosisVsDeltaH => "kurtosis_vs_delta_h",
            FigureId::KurtosisVsDeltaAlpha => "kurtosis_vs_delta_alpha",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = FigureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| FigureError::UnknownFigure(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Empty,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub figure_id: FigureId,
    /// `key: value` metadata, written as `#` lines before the header.
    pub notes: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl FigureData {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.notes {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// What the figures need beyond the per-ticker records.
#[derive(Debug, Clone)]
pub struct FigureContext<'a> {
    pub seed: u64,
    pub ghe: &'a GheConfig,
    pub mfdfa: &'a MfdfaConfig,
    pub benchmark_runs: usize,
}

/// Normal-reference bandwidth `1.06 * sd * n^(-1/5)`; `None` when the
/// sample has fewer than two points or no spread.
pub fn normal_reference_bandwidth(sample: &[f64]) -> Option<f64> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    (h > 0.0).then_some(h)
}

/// Gaussian kernel density estimate evaluated at `grid`.
pub fn gaussian_kde(sample: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (sample.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|x| {
            norm * sample
                .iter()
                .map(|s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + i as f64 * step
            }
        })
        .collect()
}

pub fn emit_figure_data(
    records: &[TickerRecord],
    figure_id: FigureId,
    ctx: &FigureContext,
) -> Result<FigureData, FigureError> {
    if records.is_empty() {
        return Err(FigureError::EmptyResults);
    }
    let mut fig = match figure_id {
        FigureId::HurstVsVolumeQ1 => hurst_vs_volume(records, figure_id, |r| r.h1),
        FigureId::HurstVsVolumeQ2 => hurst_vs_volume(records, figure_id, |r| r.h2),
        FigureId::QhqByQuartile => qhq_by_quartile(records, ctx)?,
        FigureId::QhqShuffledByQuartile => tau_by_quartile(records, ctx)?,
        FigureId::KurtosisVsDeltaH => kurtosis_vs(records, figure_id, "delta_h", |r| {
            (
                r.surrogate.delta_h.original,
                r.surrogate.delta_h.shuffled_mean,
            )
        }),
        FigureId::KurtosisVsDeltaAlpha => kurtosis_vs(records, figure_id, "delta_alpha", |r| {
            (
                r.surrogate.delta_alpha.original,
                r.surrogate.delta_alpha.shuffled_mean,
            )
        }),
    };
    fig.notes
        .insert(0, ("figure".into(), figure_id.name().into()));
    fig.notes.insert(1, ("seed".into(), ctx.seed.to_string()));
    Ok(fig)
}

fn by_quartile(records: &[TickerRecord]) -> BTreeMap<u8, Vec<&TickerRecord>> {
    let mut groups: BTreeMap<u8, Vec<&TickerRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.quartile).or_default().push(r);
    }
    groups
}

fn hurst_vs_volume(
    records: &[TickerRecord],
    figure_id: FigureId,
    h: impl Fn(&TickerRecord) -> f64,
) -> FigureData {
    let mut rows: Vec<Vec<Cell>> = records
        .iter()
        .map(|r| {
            vec![
                Cell::Text("point".into()),
                Cell::Text(r.ticker.clone()),
                Cell::Int(r.quartile.into()),
                Cell::Num(r.mean_log_volume),
                Cell::Num(h(r)),
                Cell::Empty,
            ]
        })
        .collect();
    let all: Vec<f64> = records.iter().map(&h).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut notes = vec![
        ("kernel".into(), "gaussian".into()),
        (
            "bandwidth_rule".into(),
            "normal reference, 1.06 * sd * n^(-1/5), per quartile".into(),
        ),
        (
            "grid".into(),
            format!("{DENSITY_POINTS} points over [{lo}, {hi}]"),
        ),
    ];
    let grid = linear_grid(lo, hi, DENSITY_POINTS);
    for (q, members) in by_quartile(records) {
        let sample: Vec<f64> = members.iter().map(|r| h(r)).collect();
        let Some(bw) = normal_reference_bandwidth(&sample).filter(|_| hi > lo) else {
            notes.push((
                format!("bandwidth_quartile_{q}"),
                "none (degenerate sample)".into(),
            ));
            continue;
        };
        notes.push((format!("bandwidth_quartile_{q}"), bw.to_string()));
        for (x, d) in grid.iter().zip(gaussian_kde(&sample, bw, &grid)) {
            rows.push(vec![
                Cell::Text("density".into()),
                Cell::Empty,
                Cell::Int(q.into()),
                Cell::Empty,
                Cell::Num(*x),
                Cell::Num(d),
            ]);
        }
    }
    FigureData {
        figure_id,
        notes,
        columns: vec![
            "kind",
            "ticker",
            "quartile",
            "log_volume",
            "hurst",
            "density",
        ],
        rows,
    }
}

fn benchmark_len(records: &[TickerRecord]) -> usize {
    let mut lens: Vec<usize> = records.iter().map(|r| r.stats.n).collect();
    lens.sort_unstable();
    lens[lens.len() / 2]
}

fn benchmark_series(
    records: &[TickerRecord],
    ctx: &FigureContext,
) -> Result<Vec<crate::ReturnSeries>, FigureError> {
    let n = benchmark_len(records);
    let base = derive_seed_str(ctx.seed, "benchmark");
    (0..ctx.benchmark_runs as u64)
        .map(|k| {
            generate(&SynthSpec::fgn(n, 0.5, derive_seed(base, k)))
                .map_err(|e| FigureError::Benchmark(e.to_string()))
        })
        .collect()
}

fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves[0].len();
    (0..len)
        .map(|i| {
            let finite: Vec<f64> = curves
                .iter()
                .map(|c| c[i])
                .filter(|v| v.is_finite())
                .collect();
            if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            }
        })
        .collect()
}

fn benchmark_notes(records: &[TickerRecord], ctx: &FigureContext) -> Vec<(String, String)> {
    vec![(
        "benchmark".into(),
        format!(
            "mean of {} simulated fGn series, H = 0.5, n = {}",
            ctx.benchmark_runs,
            benchmark_len(records)
        ),
    )]
}

fn qhq_by_quartile(
    records: &[TickerRecord],
    ctx: &FigureContext,
) -> Result<FigureData, FigureError> {
    let q_grid = &records[0].ghe.q_grid;
    let mut rows = Vec::new();
    for (quartile, members) in by_quartile(records) {
        let curves: Vec<Vec<f64>> = members.iter().map(|r| r.ghe.qhq.clone()).collect();
        for (q, v) in q_grid.iter().zip(mean_curve(&curves)) {
            rows.push(vec![
                Cell::Text("quartile".into()),
                Cell::Int(quartile.into()),
                Cell::Num(*q),
                Cell::Num(v),
                Cell::Int(members.len() as u64),
            ]);
        }
    }
    let bench: Vec<Vec<f64>> = benchmark_series(records, ctx)?
        .iter()
        .map(|s| estimate_hurst(s, ctx.ghe).map(|r| r.qhq))
        .collect::<Result<_, _>>()
        .map_err(|e| FigureError::Benchmark(e.to_string()))?;
    for (q, v) in ctx.ghe.q_grid.iter().zip(mean_curve(&bench)) {
        rows.push(vec![
            Cell::Text("benchmark".into()),
            Cell::Empty,
            Cell::Num(*q),
            Cell::Num(v),
            Cell::Int(bench.len() as u64),
        ]);
    }
    Ok(FigureData {
        figure_id: FigureId::QhqByQuartile,
        notes: benchmark_notes(records, ctx),
        columns: vec!["series", "quartile", "q", "qhq", "members"],
        rows,
    })
}

fn tau_by_quartile(
    records: &[TickerRecord],
    ctx: &FigureContext,
) -> Result<FigureData, FigureError> {
    let q_grid = &records[0].mfdfa.q_grid;
    let shuffled_tau = |r: &TickerRecord| -> Vec<f64> {
        q_grid
            .iter()
            .zip(&r.surrogate.shuffled_mean_h_of_q)
            .map(|(q, h)| q * h - 1.0)
            .collect()
    };
    let mut rows = Vec::new();
    for (quartile, members) in by_quartile(records) {
        let original: Vec<Vec<f64>> = members.iter().map(|r| r.mfdfa.tau_of_q.clone()).collect();
        let shuffled: Vec<Vec<f64>> = members.iter().map(|r| shuffled_tau(r)).collect();
        for (name, curves) in [("original", original), ("shuffled", shuffled)] {
            for (q, v) in q_grid.iter().zip(mean_curve(&curves)) {
                rows.push(vec![
                    Cell::Text(name.into()),
                    Cell::Int(quartile.into()),
                    Cell::Num(*q),
                    Cell::Num(v),
                    Cell::Int(members.len() as u64),
                ]);
            }
        }
    }
    let bench: Vec<Vec<f64>> = benchmark_series(records, ctx)?
        .iter()
        .map(|s| mfdfa(s, ctx.mfdfa).map(|r| r.tau_of_q))
        .collect::<Result<_, _>>()
        .map_err(|e| FigureError::Benchmark(e.to_string()))?;
    for (q, v) in ctx.mfdfa.q_grid.iter().zip(mean_curve(&bench)) {
        rows.push(vec![
            Cell::Text("benchmark".into()),
            Cell::Empty,
            Cell::Num(*q),
            Cell::Num(v),
            Cell::Int(bench.len() as u64),
        ]);
    }
    Ok(FigureData {
        figure_id: FigureId::QhqShuffledByQuartile,
        notes: benchmark_notes(records, ctx),
        columns: vec!["series", "quartile", "q", "tau", "members"],
        rows,
    })
}

fn kurtosis_vs(
    records: &[TickerRecord],
    figure_id: FigureId,
    measure: &'static str,
    pick: impl Fn(&TickerRecord) -> (f64, f64),
) -> FigureData {
    let rows = records
        .iter()
        .map(|r| {
            let (orig, shuf) = pick(r);
            vec![
                Cell::Text(r.ticker.clone()),
                Cell::Int(r.quartile.into()),
                Cell::Num(r.stats.kurtosis),
                Cell::Num(orig),
                Cell::Num(shuf),
            ]
        })
        .collect();
    let shuffled_col: &'static str = match measure {
        "delta_h" => "delta_h_shuffled_mean",
        _ => "delta_alpha_shuffled_mean",
    };
    FigureData {
        figure_id,
        notes: Vec::new(),
        columns: vec!["ticker", "quartile", "kurtosis", measure, shuffled_col],
        rows,
    }
}
