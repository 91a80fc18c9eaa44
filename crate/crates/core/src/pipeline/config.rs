use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ghe::GheConfig;
use crate::mfdfa::{dyadic_scales, uniform_q_grid, MfdfaConfig, ScaleSelection};
use crate::surrogate::SurrogateConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub ghe: GheConfig,
    pub mfdfa: MfdfaConfig,
    /// `base_seed` is ignored; each ticker gets its own seed from `seed`.
    pub surrogate: SurrogateConfig,
    pub emit_figures: bool,
    /// Re-derive every aggregate table from the per-ticker records after writing.
    pub self_check: bool,
    /// Number of simulated H = 0.5 series averaged into the figure benchmark.
    pub benchmark_runs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output_dir: PathBuf::from("report"),
            seed: 0,
            ghe: GheConfig::default(),
            mfdfa: MfdfaConfig::default(),
            surrogate: SurrogateConfig::default(),
            emit_figures: false,
            self_check: true,
            benchmark_runs: 10,
        }
    }
}

impl PipelineConfig {
    /// Defaults overridden by a `key = value` text.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    ///
    /// Lists are comma separated. A q grid may also be written `min:max:step`;
    /// `mfdfa.scales` accepts a list, `log:min:count` or `dyadic:min:max`.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            })?;
            self.set(line, key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason,
        };
        match key {
            "input" => self.input = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse(value).map_err(bad)?,
            "emit_figures" => self.emit_figures = parse(value).map_err(bad)?,
            "self_check" => self.self_check = parse(value).map_err(bad)?,
            "benchmark_runs" => self.benchmark_runs = parse(value).map_err(bad)?,
            "ghe.q_grid" => self.ghe.q_grid = parse_grid(value).map_err(bad)?,
            "ghe.tau_max_min" => self.ghe.tau_max_range.0 = parse(value).map_err(bad)?,
            "ghe.tau_max_max" => self.ghe.tau_max_range.1 = parse(value).map_err(bad)?,
            "mfdfa.q_grid" => self.mfdfa.q_grid = parse_grid(value).map_err(bad)?,
            "mfdfa.scales" => self.mfdfa.scales = parse_scales(value).map_err(bad)?,
            "mfdfa.order" => self.mfdfa.detrend_order = parse(value).map_err(bad)?,
            "surrogate.n_shuffles" => self.surrogate.n_shuffles = parse(value).map_err(bad)?,
            "surrogate.ci_low" => self.surrogate.ci_low = parse(value).map_err(bad)?,
            "surrogate.ci_high" => self.surrogate.ci_high = parse(value).map_err(bad)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Checks what can be checked without data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.surrogate
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for q in [1.0, 2.0] {
            if !self.ghe.q_grid.iter().any(|g| (g - q).abs() < 1e-9) {
                return Err(ConfigError::Invalid(format!("ghe.q_grid must contain {q}")));
            }
        }
        if self.mfdfa.q_grid.len() < 3 {
            return Err(ConfigError::Invalid(
                "mfdfa.q_grid needs at least 3 points".into(),
            ));
        }
        if self.benchmark_runs == 0 {
            return Err(ConfigError::Invalid(
                "benchmark_runs must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|v| parse(v.trim()))
        .collect::<Result<Vec<T>, String>>()
}

fn parse_grid(value: &str) -> Result<Vec<f64>, String> {
    let grid = if value.contains(':') {
        let parts: Vec<f64> = value
            .split(':')
            .map(|v| parse(v.trim()))
            .collect::<Result<_, _>>()?;
        let [min, max, step] = parts[..] else {
            return Err("range must be `min:max:step`".into());
        };
        if !(step > 0.0 && min <= max) {
            return Err("range needs step > 0 and min <= max".into());
        }
        uniform_q_grid(min, max, step)
    } else {
        parse_list(value)?
    };
    if grid.is_empty() {
        return Err("empty grid".into());
    }
    Ok(grid)
}

fn parse_scales(value: &str) -> Result<ScaleSelection, String> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    match parts[..] {
        ["log", min, count] => Ok(ScaleSelection::LogSpaced {
            min: parse(min)?,
            count: parse(count)?,
        }),
        ["dyadic", min, max] => Ok(ScaleSelection::Explicit(dyadic_scales(
            parse(min)?,
            parse(max)?,
        ))),
        [list] => Ok(ScaleSelection::Explicit(parse_list(list)?)),
        _ => Err("expected a list, `log:min:count` or `dyadic:min:max`".into()),
    }
}
