//! Loading and validation of daily price/volume series, percent log
//! returns, and volume-quartile assignment across a universe of assets.
//!
//! The on-disk format is a UTF-8 CSV with header `date,price,volume`
//! (ISO-8601 dates, `.` decimal separator). A universe is either a
//! directory holding one such file per ticker (ticker = file stem) or a
//! single long-format CSV with header `ticker,date,price,volume`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DATE_FMT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: duplicate date {date}")]
    DuplicateDate { line: u64, date: NaiveDate },
    #[error("line {line}: price must be strictly positive")]
    NonPositivePrice { line: u64 },
    #[error("series `{ticker}` is empty")]
    EmptySeries { ticker: String },
    #[error("series `{ticker}` is inconsistent: {reason}")]
    InvalidSeries { ticker: String, reason: String },
    #[error("{} missing calendar day(s), first {}", gaps.len(), gaps[0])]
    MissingDays { gaps: Vec<NaiveDate> },
    #[error("series `{ticker}` has {len} prices, need at least 2")]
    TooShort { ticker: String, len: usize },
    #[error("return series `{ticker}` contains non-finite values")]
    NonFiniteReturn { ticker: String },
    #[error("universe is empty")]
    EmptyUniverse,
    #[error("universe has {0} series, need at least 4 for quartiles")]
    TooFewSeries(usize),
    #[error("series `{0}` has non-positive average volume")]
    NonPositiveVolume(String),
    #[error("ticker `{0}` appears more than once in the universe")]
    DuplicateTicker(String),
}

/// Daily prices and volumes for one asset, sorted by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    volumes: Vec<f64>,
}

impl RawSeries {
    /// Builds a series, checking lengths, strictly increasing dates,
    /// positive finite prices, and non-negative finite volumes.
    pub fn new(
        ticker: impl Into<String>,
        dates: Vec<NaiveDate>,
        prices: Vec<f64>,
        volumes: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let ticker = ticker.into();
        let invalid = |reason: String| IngestError::InvalidSeries {
            ticker: ticker.clone(),
            reason,
        };
        if dates.is_empty() {
            return Err(IngestError::EmptySeries { ticker });
        }
        if dates.len() != prices.len() || dates.len() != volumes.len() {
            return Err(invalid(format!(
                "{} dates, {} prices, {} volumes",
                dates.len(),
                prices.len(),
                volumes.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("non-positive price on {}", dates[i])));
        }
        if let Some(i) = volumes.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(format!("invalid volume on {}", dates[i])));
        }
        Ok(Self {
            ticker,
            dates,
            prices,
            volumes,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn mean_volume(&self) -> f64 {
        self.volumes.iter().sum::<f64>() / self.volumes.len() as f64
    }
}

/// Provenance carried alongside a return series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    /// Seed of the permutation, when the series is a shuffled surrogate.
    pub shuffle_seed: Option<u64>,
}

/// Percent log returns `100 * ln(P[t+1] / P[t])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    ticker: String,
    values: Vec<f64>,
    meta: SeriesMeta,
}

impl ReturnSeries {
    pub fn new(ticker: impl Into<String>, values: Vec<f64>) -> Result<Self, IngestError> {
        Self::with_meta(ticker, values, SeriesMeta::default())
    }

    pub fn with_meta(
        ticker: impl Into<String>,
        values: Vec<f64>,
        meta: SeriesMeta,
    ) -> Result<Self, IngestError> {
        let ticker = ticker.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteReturn { ticker });
        }
        Ok(Self {
            ticker,
            values,
            meta,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same series with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, IngestError> {
        Self::with_meta(
            self.ticker.clone(),
            self.values.iter().map(|v| v * factor).collect(),
            self.meta.clone(),
        )
    }

    /// Same series in reverse time order.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            ticker: self.ticker.clone(),
            values,
            meta: self.meta.clone(),
        }
    }

    pub(crate) fn permuted(&self, values: Vec<f64>, seed: u64) -> Self {
        let mut meta = self.meta.clone();
        meta.shuffle_seed = Some(seed);
        Self {
            ticker: self.ticker.clone(),
            values,
            meta,
        }
    }
}

/// Volume rank group of one asset; quartile 1 holds the largest volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileAssignment {
    pub ticker: String,
    /// Natural log of the arithmetic mean of daily volumes.
    pub mean_log_volume: f64,
    pub quartile: u8,
}

/// Reads a single-asset CSV (`date,price,volume`). The ticker is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawSeries, IngestError> {
    let path = path.as_ref();
    let ticker = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = read_to_string(path)?;
    parse_csv(&ticker, &text)
}

/// Parses single-asset CSV text. Rows may be in any order; they are
/// re-sorted by date.
pub fn parse_csv(ticker: &str, text: &str) -> Result<RawSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(&mut reader, &["date", "price", "volume"])?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        rows.push(parse_row(line, &record[0], &record[1], &record[2])?);
    }
    assemble(ticker, rows)
}

/// Reads a long-format CSV (`ticker,date,price,volume`) into one series
/// per ticker, ordered by ticker.
pub fn load_long_csv(path: impl AsRef<Path>) -> Result<Vec<RawSeries>, IngestError> {
    let text = read_to_string(path.as_ref())?;
    parse_long_csv(&text)
}

pub fn parse_long_csv(text: &str) -> Result<Vec<RawSeries>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(&mut reader, &["ticker", "date", "price", "volume"])?;
    let mut groups: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        if record[0].is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty ticker".into(),
            });
        }
        let row = parse_row(line, &record[1], &record[2], &record[3])?;
        groups.entry(record[0].to_string()).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|(ticker, rows)| assemble(&ticker, rows))
        .collect()
}

/// Loads a universe from a directory of per-ticker CSVs or from a single
/// file (long format when the header starts with `ticker`, otherwise a
/// single-asset file). Result is ordered by ticker.
pub fn load_universe(path: impl AsRef<Path>) -> Result<Vec<RawSeries>, IngestError> {
    let path = path.as_ref();
    let mut universe = if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        files.iter().map(load_csv).collect::<Result<Vec<_>, _>>()?
    } else {
        let text = read_to_string(path)?;
        let first = text
            .lines()
            .next()
            .unwrap_or("")
            .trim_start_matches('\u{feff}');
        if first.trim().to_ascii_lowercase().starts_with("ticker") {
            parse_long_csv(&text)?
        } else {
            vec![load_csv(path)?]
        }
    };
    if universe.is_empty() {
        return Err(IngestError::EmptyUniverse);
    }
    universe.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    if let Some(w) = universe.windows(2).find(|w| w[0].ticker == w[1].ticker) {
        return Err(IngestError::DuplicateTicker(w[0].ticker.clone()));
    }
    Ok(universe)
}

/// Returns the series unchanged when its dates form a contiguous daily
/// range, otherwise lists every absent calendar date.
pub fn validate_continuity(series: RawSeries) -> Result<RawSeries, IngestError> {
    if series.is_empty() {
        return Err(IngestError::EmptySeries {
            ticker: series.ticker,
        });
    }
    let mut gaps = Vec::new();
    for w in series.dates.windows(2) {
        let mut d = w[0].succ_opt();
        while let Some(day) = d {
            if day >= w[1] {
                break;
            }
            gaps.push(day);
            d = day.succ_opt();
        }
    }
    if gaps.is_empty() {
        Ok(series)
    } else {
        Err(IngestError::MissingDays { gaps })
    }
}

/// Percent log returns of a continuity-validated series.
pub fn log_returns(series: &RawSeries) -> Result<ReturnSeries, IngestError> {
    if series.len() < 2 {
        return Err(IngestError::TooShort {
            ticker: series.ticker.clone(),
            len: series.len(),
        });
    }
    let series = validate_continuity(series.clone())?;
    let values = series
        .prices
        .windows(2)
        .map(|w| 100.0 * (w[1] / w[0]).ln())
        .collect();
    let meta = SeriesMeta {
        first_date: series.dates.first().copied(),
        last_date: series.dates.last().copied(),
        shuffle_seed: None,
    };
    ReturnSeries::with_meta(series.ticker, values, meta)
}

/// Inverse of [`log_returns`]: a price path starting at `p0`.
pub fn prices_from_returns(p0: f64, returns: &[f64]) -> Vec<f64> {
    let mut prices = Vec::with_capacity(returns.len() + 1);
    prices.push(p0);
    let mut log_p = p0.ln();
    for r in returns {
        log_p += r / 100.0;
        prices.push(log_p.exp());
    }
    prices
}

/// Daily series whose percent log returns are `returns`, starting at
/// price `p0` on `start`, with a constant volume.
pub fn series_from_returns(
    ticker: &str,
    start: NaiveDate,
    p0: f64,
    returns: &[f64],
    volume: f64,
) -> Result<RawSeries, IngestError> {
    let prices = prices_from_returns(p0, returns);
    let dates = start.iter_days().take(prices.len()).collect();
    let volumes = vec![volume; prices.len()];
    RawSeries::new(ticker, dates, prices, volumes)
}

/// Single-asset CSV text (`date,price,volume`) readable by [`parse_csv`].
pub fn to_csv(series: &RawSeries) -> String {
    let mut out = String::from("date,price,volume\n");
    for ((d, p), v) in series.dates.iter().zip(&series.prices).zip(&series.volumes) {
        out.push_str(&format!("{},{p},{v}\n", d.format(DATE_FMT)));
    }
    out
}

/// Ranks the universe by average daily volume and splits it into four
/// groups. When the size is not divisible by four the remainder goes to
/// the highest-volume quartiles first. Ties are broken by ticker.
pub fn assign_quartiles(universe: &[RawSeries]) -> Result<Vec<QuartileAssignment>, IngestError> {
    if universe.is_empty() {
        return Err(IngestError::EmptyUniverse);
    }
    if universe.len() < 4 {
        return Err(IngestError::TooFewSeries(universe.len()));
    }
    let mut ranked = Vec::with_capacity(universe.len());
    for s in universe {
        let mean = s.mean_volume();
        if !(mean.is_finite() && mean > 0.0) {
            return Err(IngestError::NonPositiveVolume(s.ticker.clone()));
        }
        ranked.push((s.ticker.clone(), mean.ln()));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(w) = ranked.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateTicker(w[0].0.clone()));
    }
    let sizes = quartile_sizes(ranked.len());
    let mut out = Vec::with_capacity(ranked.len());
    let mut iter = ranked.into_iter();
    for (q, size) in sizes.iter().enumerate() {
        for (ticker, mean_log_volume) in iter.by_ref().take(*size) {
            out.push(QuartileAssignment {
                ticker,
                mean_log_volume,
                quartile: q as u8 + 1,
            });
        }
    }
    Ok(out)
}

/// Group sizes for `n` assets, largest-volume quartile first.
pub fn quartile_sizes(n: usize) -> [usize; 4] {
    let base = n / 4;
    let rem = n % 4;
    let mut sizes = [base; 4];
    for s in sizes.iter_mut().take(rem) {
        *s += 1;
    }
    sizes
}

struct Row {
    line: u64,
    date: NaiveDate,
    price: f64,
    volume: f64,
}

fn parse_row(line: u64, date: &str, price: &str, volume: &str) -> Result<Row, IngestError> {
    let malformed = |reason: String| IngestError::MalformedRow { line, reason };
    let date = NaiveDate::parse_from_str(date, DATE_FMT)
        .map_err(|e| malformed(format!("date `{date}`: {e}")))?;
    let price: f64 = price
        .parse()
        .map_err(|_| malformed(format!("price `{price}` is not a number")))?;
    if price.is_nan() || price.is_infinite() {
        return Err(malformed("price is not finite".into()));
    }
    if price <= 0.0 {
        return Err(IngestError::NonPositivePrice { line });
    }
    let volume: f64 = volume
        .parse()
        .map_err(|_| malformed(format!("volume `{volume}` is not a number")))?;
    if !(volume.is_finite() && volume >= 0.0) {
        return Err(malformed(format!(
            "volume `{volume}` must be finite and non-negative"
        )));
    }
    Ok(Row {
        line,
        date,
        price,
        volume,
    })
}

fn assemble(ticker: &str, mut rows: Vec<Row>) -> Result<RawSeries, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::EmptySeries {
            ticker: ticker.to_string(),
        });
    }
    rows.sort_by_key(|r| (r.date, r.line));
    if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(IngestError::DuplicateDate {
            line: w[1].line,
            date: w[1].date,
        });
    }
    let dates = rows.iter().map(|r| r.date).collect();
    let prices = rows.iter().map(|r| r.price).collect();
    let volumes = rows.iter().map(|r| r.volume).collect();
    RawSeries::new(ticker, dates, prices, volumes)
}

fn check_header<R: Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = reader.headers().map_err(csv_error)?;
    let found: Vec<String> = headers
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    if found
        .iter()
        .map(String::as_str)
        .ne(expected.iter().copied())
    {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(text)
}
