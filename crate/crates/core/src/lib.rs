//! Multifractal analysis of daily return series: ingestion, descriptive
//! statistics, synthetic benchmarks, generalized Hurst exponents, MF-DFA
//! and shuffling surrogates.

pub mod fit;
pub mod ghe;
pub mod ingest;
pub mod mfdfa;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod surrogate;
pub mod synth;

pub use ghe::{estimate_hurst, GheConfig, GheResult};
pub use ingest::{RawSeries, ReturnSeries};
pub use mfdfa::{mfdfa, MfdfaConfig, MfdfaResult};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError};
pub use stats::{describe, DescriptiveStats};
pub use surrogate::{surrogate_test, SurrogateConfig, SurrogateOutcome, SurrogateTestReport};
pub use synth::{generate, SynthKind, SynthSpec};
