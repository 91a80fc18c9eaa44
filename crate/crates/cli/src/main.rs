use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::error;

use fractal_core::ghe::estimate_hurst;
use fractal_core::ingest::{
    assign_quartiles, load_universe, log_returns, series_from_returns, to_csv, QuartileAssignment,
    ReturnSeries,
};
use fractal_core::mfdfa::mfdfa;
use fractal_core::pipeline::report::{self, HurstRow, QhqCurveRow, QhqRow, Rendered, StatsRow};
use fractal_core::pipeline::{run_pipeline, write_atomic, PipelineConfig, PipelineError};
use fractal_core::seed::derive_seed_str;
use fractal_core::stats::describe;
use fractal_core::surrogate::{aggregate_by_quartile, surrogate_test, Measure, SurrogateConfig};
use fractal_core::synth::{generate, SynthKind, SynthSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fractal",
    version,
    about = "Hurst exponents, MF-DFA and shuffling surrogates for daily return series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Series CSV, long-format CSV, or directory of per-ticker CSVs.
    #[arg(long)]
    input: PathBuf,
    /// Output directory (tables are printed to stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `key = value` configuration file overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics of percent log returns.
    Stats(Common),
    /// Generalized Hurst exponents H(q) and the qH(q) curve.
    Ghe {
        #[command(flatten)]
        common: Common,
        /// Comma-separated q grid; must contain 1 and 2.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        /// Also write qH(q) averaged per volume quartile.
        #[arg(long)]
        curve: bool,
    },
    /// MF-DFA; writes one JSON result per ticker.
    Mfdfa {
        #[command(flatten)]
        common: Common,
        /// Restrict to these tickers (comma separated).
        #[arg(long, value_delimiter = ',')]
        ticker: Vec<String>,
    },
    /// Shuffling surrogate test for Delta H and Delta alpha.
    Surrogate {
        #[command(flatten)]
        common: Common,
        /// Number of shuffles.
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated subset of `delta_h,delta_alpha`.
        #[arg(long, value_delimiter = ',', default_value = "delta_h,delta_alpha")]
        measures: Vec<Measure>,
    },
    /// Writes a synthetic `date,price,volume` CSV.
    Simulate {
        #[arg(long, default_value = "fgn")]
        kind: SynthKind,
        #[arg(long, default_value_t = 789)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        hurst: f64,
        /// Cascade weight for `binomial_cascade`.
        #[arg(long, default_value_t = 0.75)]
        weight: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e6)]
        volume: f64,
        #[arg(long, default_value = "2018-01-06")]
        start: NaiveDate,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full batch run producing the report directory.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Also write figure-data files.
        #[arg(long)]
        emit_figures: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Budget(_) => EXIT_BUDGET,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Budget(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            PipelineConfig::from_kv(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    config.input = common.input.clone();
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.seed = common.seed;
    Ok(config)
}

fn returns(common: &Common) -> Result<Vec<ReturnSeries>, Failure> {
    load_universe(&common.input)
        .map_err(data)?
        .iter()
        .map(|raw| log_returns(raw).map_err(data))
        .collect()
}

fn emit(out: Option<&Path>, tables: Vec<Rendered>) -> Result<(), Failure> {
    match out {
        None => {
            for t in tables {
                print!("{}", t.csv);
            }
        }
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
            for t in tables {
                write_atomic(&dir.join(format!("{}.csv", t.stem)), t.csv.as_bytes())
                    .map_err(data)?;
                write_atomic(&dir.join(format!("{}.json", t.stem)), t.json.as_bytes())
                    .map_err(data)?;
            }
        }
    }
    Ok(())
}

fn cmd_stats(common: &Common) -> Result<(), Failure> {
    let rows = returns(common)?
        .iter()
        .map(|s| {
            describe(s)
                .map(|stats| StatsRow {
                    ticker: s.ticker().to_string(),
                    stats,
                })
                .map_err(|e| data(format!("{}: {e}", s.ticker())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit(
        common.out.as_deref(),
        vec![report::render_stats(common.seed, &rows).map_err(data)?],
    )
}

fn cmd_ghe(common: &Common, q: Option<Vec<f64>>, curve: bool) -> Result<(), Failure> {
    let mut config = load_config(common)?;
    if let Some(q) = q {
        config.ghe.q_grid = q;
    }
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let raw = load_universe(&common.input).map_err(data)?;
    let assignments = if raw.len() >= 4 {
        Some(assign_quartiles(&raw).map_err(data)?)
    } else {
        None
    };
    let mut hurst = Vec::new();
    let mut rows = Vec::new();
    for r in &raw {
        let s = log_returns(r).map_err(data)?;
        let g =
            estimate_hurst(&s, &config.ghe).map_err(|e| data(format!("{}: {e}", s.ticker())))?;
        let at = |q: f64| {
            g.q_grid
                .iter()
                .position(|x| (x - q).abs() < 1e-9)
                .map_or((f64::NAN, f64::NAN), |i| (g.h_of_q[i], g.h_stderr[i]))
        };
        let ((h1, se1), (h2, se2)) = (at(1.0), at(2.0));
        let a = assignments
            .as_ref()
            .and_then(|a| a.iter().find(|a| a.ticker == s.ticker()));
        hurst.push(HurstRow {
            ticker: s.ticker().to_string(),
            quartile: a.map_or(0, |a| a.quartile),
            log_volume: a.map_or(f64::NAN, |a| a.mean_log_volume),
            h1,
            h2,
            h1_stderr: se1,
            h2_stderr: se2,
        });
        for i in 0..g.q_grid.len() {
            rows.push(QhqRow {
                ticker: s.ticker().to_string(),
                q: g.q_grid[i],
                h: g.h_of_q[i],
                qhq: g.qhq[i],
                h_stderr: g.h_stderr[i],
            });
        }
    }
    let mut tables = vec![
        report::render_hurst(common.seed, &hurst).map_err(data)?,
        report::render_qhq(common.seed, &rows).map_err(data)?,
    ];
    if curve {
        let Some(assignments) = &assignments else {
            return Err(data("--curve needs at least 4 series"));
        };
        tables.push(
            report::render_qhq_curve(common.seed, &quartile_curve(&rows, assignments))
                .map_err(data)?,
        );
    }
    emit(common.out.as_deref(), tables)
}

/// Mean qH(q) per (quartile, q), over tickers with a finite value.
fn quartile_curve(rows: &[QhqRow], assignments: &[QuartileAssignment]) -> Vec<QhqCurveRow> {
    let mut acc: BTreeMap<(u8, usize), (f64, f64, usize)> = BTreeMap::new();
    for a in assignments {
        let mine = rows.iter().filter(|r| r.ticker == a.ticker);
        for (i, r) in mine.enumerate() {
            if r.qhq.is_finite() {
                let e = acc.entry((a.quartile, i)).or_insert((r.q, 0.0, 0));
                e.1 += r.qhq;
                e.2 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((quartile, _), (q, sum, members))| QhqCurveRow {
            quartile,
            q,
            qhq: sum / members as f64,
            members,
        })
        .collect()
}

fn cmd_mfdfa(common: &Common, tickers: &[String]) -> Result<(), Failure> {
    let config = load_config(common)?;
    let mut series = returns(common)?;
    if !tickers.is_empty() {
        if let Some(t) = tickers
            .iter()
            .find(|t| !series.iter().any(|s| s.ticker() == *t))
        {
            return Err(data(format!("ticker `{t}` not found in input")));
        }
        series.retain(|s| tickers.iter().any(|t| t == s.ticker()));
    }
    for s in series {
        let r = mfdfa(&s, &config.mfdfa).map_err(|e| data(format!("{}: {e}", s.ticker())))?;
        let doc = serde_json::json!({
            "ticker": s.ticker(),
            "seed": common.seed,
            "config": &config.mfdfa,
            "result": r,
        });
        let json = serde_json::to_string_pretty(&doc).map_err(data)?;
        match &common.out {
            None => println!("{json}"),
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
                let path = dir.join(format!(
                    "{}.json",
                    fractal_core::pipeline::file_stem(s.ticker())
                ));
                write_atomic(&path, json.as_bytes()).map_err(data)?;
            }
        }
    }
    Ok(())
}

fn cmd_surrogate(common: &Common, n: Option<usize>, measures: &[Measure]) -> Result<(), Failure> {
    let config = load_config(common)?;
    let raw = load_universe(&common.input).map_err(data)?;
    let mut outcomes = Vec::new();
    for r in &raw {
        let s = log_returns(r).map_err(data)?;
        let sc = SurrogateConfig {
            n_shuffles: n.unwrap_or(config.surrogate.n_shuffles),
            base_seed: derive_seed_str(common.seed, s.ticker()),
            ..config.surrogate.clone()
        };
        sc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let o = surrogate_test(&s, &sc, &config.mfdfa)
            .map_err(|e| data(format!("{}: {e}", s.ticker())))?;
        outcomes.push(o);
    }
    let ci = (config.surrogate.ci_low, config.surrogate.ci_high);
    let mut tables = Vec::new();
    for m in measures {
        let rows: Vec<_> = outcomes.iter().map(|o| o.report(*m).clone()).collect();
        tables.push(report::render_surrogate(common.seed, *m, ci, &rows).map_err(data)?);
    }
    if raw.len() >= 4 {
        let assignments = assign_quartiles(&raw).map_err(data)?;
        let table = aggregate_by_quartile(&outcomes, &assignments).map_err(data)?;
        tables.push(report::render_table2(common.seed, &table.rows).map_err(data)?);
        tables.push(report::render_flag_rates(common.seed, &table.flag_rates).map_err(data)?);
    }
    emit(common.out.as_deref(), tables)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    kind: SynthKind,
    n: usize,
    hurst: f64,
    weight: f64,
    seed: u64,
    volume: f64,
    start: NaiveDate,
    out: &Path,
) -> Result<(), Failure> {
    let spec = SynthSpec {
        kind,
        n,
        hurst,
        cascade_weight: weight,
        seed,
    };
    let series = generate(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let ticker = out
        .file_stem()
        .map_or_else(|| "SIM".to_string(), |s| s.to_string_lossy().into_owned());
    let raw = series_from_returns(&ticker, start, 100.0, series.values(), volume).map_err(data)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
    }
    write_atomic(out, to_csv(&raw).as_bytes()).map_err(data)
}

fn cmd_pipeline(common: &Common, emit_figures: bool) -> Result<(), Failure> {
    let mut config = load_config(common)?;
    config.emit_figures |= emit_figures;
    match run_pipeline(&config) {
        Ok(summary) => {
            println!(
                "{} tickers analysed, {} failed; report in {}",
                summary.records.len(),
                summary.failures.len(),
                summary.output_dir.display()
            );
            Ok(())
        }
        Err(e @ PipelineError::OverBudget { .. }) => Err(Failure::Budget(e.to_string())),
        Err(e @ PipelineError::Config(_)) => Err(Failure::Usage(e.to_string())),
        Err(e) => Err(data(e)),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Stats(c) => cmd_stats(&c),
        Command::Ghe { common, q, curve } => cmd_ghe(&common, q, curve),
        Command::Mfdfa { common, ticker } => cmd_mfdfa(&common, &ticker),
        Command::Surrogate {
            common,
            n,
            measures,
        } => cmd_surrogate(&common, n, &measures),
        Command::Simulate {
            kind,
            n,
            hurst,
            weight,
            seed,
            volume,
            start,
            out,
        } => cmd_simulate(kind, n, hurst, weight, seed, volume, start, &out),
        Command::Pipeline {
            common,
            emit_figures,
        } => cmd_pipeline(&common, emit_figures),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message());
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
