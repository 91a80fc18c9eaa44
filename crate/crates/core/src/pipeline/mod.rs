//! End-to-end batch run over a universe of series.
//!
//! Tickers are analysed in parallel and isolated from each other: a
//! failing ticker is logged and listed in `failures.csv`, and the run only
//! fails when more than 10% of the universe fails. All randomness is
//! derived from the single pipeline seed. Every file is written through a
//! temporary name and renamed into place.

mod config;
pub mod figures;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConfigError, PipelineConfig};
pub use figures::{emit_figure_data, FigureContext, FigureData, FigureError, FigureId};

use crate::ghe::{estimate_hurst, GheResult};
use crate::ingest::{
    assign_quartiles, load_universe, log_returns, IngestError, QuartileAssignment, RawSeries,
};
use crate::mfdfa::{mfdfa, MfdfaResult};
use crate::seed::derive_seed_str;
use crate::stats::{describe, DescriptiveStats};
use crate::surrogate::{surrogate_test, Measure, SurrogateConfig, SurrogateOutcome};

pub const MANIFEST: &str = "manifest.json";
pub const MFDFA_DIR: &str = "mfdfa";
pub const FIGURES_DIR: &str = "figures";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} tickers failed, above the 10% budget")]
    OverBudget { failed: usize, total: usize },
    #[error("aggregation failed: {0}")]
    Aggregate(String),
    #[error("rendering failed: {0}")]
    Render(String),
    #[error(transparent)]
    Figure(#[from] FigureError),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

/// Everything computed for one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerRecord {
    pub ticker: String,
    pub quartile: u8,
    pub mean_log_volume: f64,
    /// Seed of this ticker's surrogate ensemble.
    pub seed: u64,
    pub stats: DescriptiveStats,
    pub h1: f64,
    pub h2: f64,
    pub ghe: GheResult,
    pub mfdfa: MfdfaResult,
    pub surrogate: SurrogateOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerFailure {
    pub ticker: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerEntry {
    pub ticker: String,
    pub quartile: u8,
    pub seed: u64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub schema_version: u32,
    pub package_version: String,
    pub seed: u64,
    /// Complete configuration; reloading it reproduces the run. The output
    /// directory is recorded as `.`, the directory holding the manifest.
    pub config: PipelineConfig,
    pub tickers: Vec<TickerEntry>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Render(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub records: Vec<TickerRecord>,
    pub failures: Vec<TickerFailure>,
    pub assignments: Vec<QuartileAssignment>,
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// File-name-safe form of a ticker.
pub fn file_stem(ticker: &str) -> String {
    ticker
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn analyse(
    raw: &RawSeries,
    assignment: &QuartileAssignment,
    config: &PipelineConfig,
) -> Result<TickerRecord, TickerFailure> {
    let fail = |stage: &str, e: &dyn std::fmt::Display| TickerFailure {
        ticker: raw.ticker().to_string(),
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let series = log_returns(raw).map_err(|e| fail("returns", &e))?;
    let stats = describe(&series).map_err(|e| fail("stats", &e))?;
    let ghe = estimate_hurst(&series, &config.ghe).map_err(|e| fail("ghe", &e))?;
    let pick = |q: f64| ghe.h_at(q).filter(|h| h.is_finite());
    let (Some(h1), Some(h2)) = (pick(1.0), pick(2.0)) else {
        return Err(fail("ghe", &"H(1) or H(2) could not be estimated"));
    };
    let mf = mfdfa(&series, &config.mfdfa).map_err(|e| fail("mfdfa", &e))?;
    let seed = derive_seed_str(config.seed, raw.ticker());
    let sc = SurrogateConfig {
        base_seed: seed,
        ..config.surrogate.clone()
    };
    let surrogate =
        surrogate_test(&series, &sc, &config.mfdfa).map_err(|e| fail("surrogate", &e))?;
    Ok(TickerRecord {
        ticker: raw.ticker().to_string(),
        quartile: assignment.quartile,
        mean_log_volume: assignment.mean_log_volume,
        seed,
        stats,
        h1,
        h2,
        ghe,
        mfdfa: mf,
        surrogate,
    })
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, contents: &[u8]) -> Result<(), PipelineError> {
        write_atomic(&self.dir.join(rel), contents)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn table(&mut self, r: report::Rendered) -> Result<(), PipelineError> {
        self.put(&format!("{}.csv", r.stem), r.csv.as_bytes())?;
        self.put(&format!("{}.json", r.stem), r.json.as_bytes())
    }
}

/// Runs the full analysis and writes the report directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let universe = load_universe(&config.input)?;
    let assignments = assign_quartiles(&universe)?;
    let dir = config.output_dir.as_path();
    fs::create_dir_all(dir.join(MFDFA_DIR)).map_err(|e| io_err(dir, e))?;
    info!(
        "analysing {} series from {}",
        universe.len(),
        config.input.display()
    );

    let outcomes: Vec<Result<TickerRecord, TickerFailure>> = universe
        .par_iter()
        .map(|raw| {
            let a = assignments
                .iter()
                .find(|a| a.ticker == raw.ticker())
                .expect("every series has a quartile");
            let rec = analyse(raw, a, config)?;
            let json = serde_json::to_string_pretty(&rec.mfdfa).map_err(|e| TickerFailure {
                ticker: rec.ticker.clone(),
                stage: "write".into(),
                message: e.to_string(),
            })?;
            let path = dir
                .join(MFDFA_DIR)
                .join(format!("{}.json", file_stem(&rec.ticker)));
            write_atomic(&path, json.as_bytes()).map_err(|e| TickerFailure {
                ticker: rec.ticker.clone(),
                stage: "write".into(),
                message: e.to_string(),
            })?;
            Ok(rec)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => {
                warn!("{} failed at {}: {}", f.ticker, f.stage, f.message);
                failures.push(f);
            }
        }
    }

    let seed = config.seed;
    let mut w = Writer {
        dir,
        written: records
            .iter()
            .map(|r| format!("{MFDFA_DIR}/{}.json", file_stem(&r.ticker)))
            .collect(),
    };
    w.table(report::render_failures(seed, &failures)?)?;
    let total = universe.len();
    let over_budget = failures.len() * 10 > total;

    if !over_budget {
        let hurst = report::hurst_rows(&records);
        let table2 = report::table2(&records, &assignments)?;
        w.table(report::render_stats(seed, &report::stats_rows(&records))?)?;
        w.table(report::render_hurst(seed, &hurst)?)?;
        w.table(report::render_qhq(seed, &report::qhq_rows(&records))?)?;
        w.table(report::render_mfdfa(seed, &report::mfdfa_rows(&records))?)?;
        let ci = (config.surrogate.ci_low, config.surrogate.ci_high);
        for m in [Measure::DeltaH, Measure::DeltaAlpha] {
            w.table(report::render_surrogate(
                seed,
                m,
                ci,
                &report::surrogate_rows(&records, m),
            )?)?;
        }
        w.table(report::render_table1(seed, &report::table1(&hurst))?)?;
        w.table(report::render_table2(seed, &table2.rows)?)?;
        w.table(report::render_flag_rates(seed, &table2.flag_rates)?)?;

        if config.emit_figures {
            fs::create_dir_all(dir.join(FIGURES_DIR)).map_err(|e| io_err(dir, e))?;
            let ctx = FigureContext {
                seed,
                ghe: &config.ghe,
                mfdfa: &config.mfdfa,
                benchmark_runs: config.benchmark_runs,
            };
            for id in FigureId::ALL {
                let fig = emit_figure_data(&records, id, &ctx)?;
                w.put(
                    &format!("{FIGURES_DIR}/{}.csv", id.name()),
                    fig.to_csv().as_bytes(),
                )?;
            }
        }
    }

    let failed: std::collections::BTreeMap<&str, &str> = failures
        .iter()
        .map(|f| (f.ticker.as_str(), f.stage.as_str()))
        .collect();
    let tickers = universe
        .iter()
        .map(|raw| {
            let t = raw.ticker();
            TickerEntry {
                ticker: t.to_string(),
                quartile: assignments
                    .iter()
                    .find(|a| a.ticker == t)
                    .map_or(0, |a| a.quartile),
                seed: derive_seed_str(seed, t),
                status: failed
                    .get(t)
                    .map_or("ok".to_string(), |s| format!("failed: {s}")),
            }
        })
        .collect();
    let mut artifacts = w.written.clone();
    artifacts.sort();
    let manifest = Manifest {
        schema: "fractal-report/manifest".into(),
        schema_version: report::SCHEMA_VERSION,
        package_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: PipelineConfig {
            output_dir: PathBuf::from("."),
            ..config.clone()
        },
        tickers,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Render(e.to_string()))?;
    w.put(MANIFEST, format!("{json}\n").as_bytes())?;

    if over_budget {
        return Err(PipelineError::OverBudget {
            failed: failures.len(),
            total,
        });
    }
    if config.self_check {
        report::self_check(dir)?;
    }
    info!(
        "wrote report for {} tickers ({} failed) to {}",
        records.len(),
        failures.len(),
        dir.display()
    );
    Ok(PipelineSummary {
        output_dir: dir.to_path_buf(),
        records,
        failures,
        assignments,
    })
}
