//! Experiment config: one JSON file per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use qa_core::simulator::PhiProbe;
use qa_core::{ModelConfig, QueueModel, Truncation};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub rates: Option<RatesBlock>,
    #[serde(default)]
    pub alpha: Option<AlphaBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub tail: Option<TailBlock>,
    #[serde(default)]
    pub ht_study: Option<StudyBlock>,
    #[serde(default)]
    pub lv_study: Option<LvStudyBlock>,
    #[serde(default)]
    pub validate: Option<ValidateBlock>,
}

/// Either `{"start", "stop", "step"}` or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Grid::List(xs) => Ok(xs.clone()),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(CliError::Config("grid needs step > 0 and stop >= start".into()));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|j| start + j as f64 * step).collect())
            }
        }
    }
}

/// A truncation level: a positive number, `"inf"` (no truncation) or
/// `"limit"` (the `v ↑ ∞` limit).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum TruncConfig {
    At(f64),
    Named(TruncName),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncName {
    Inf,
    Limit,
}

impl TruncConfig {
    pub fn truncation(self) -> Result<Truncation, CliError> {
        match self {
            TruncConfig::At(v) if v > 0.0 && v.is_finite() => Ok(Truncation::At(v)),
            TruncConfig::At(v) => Err(CliError::Config(format!("truncation level {v} must be positive and finite"))),
            TruncConfig::Named(TruncName::Inf) => Ok(Truncation::Infinite),
            TruncConfig::Named(TruncName::Limit) => Ok(Truncation::Limit),
        }
    }
}

fn default_truncs() -> Vec<TruncConfig> {
    vec![TruncConfig::Named(TruncName::Limit)]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesBlock {
    pub theta: Grid,
    #[serde(default = "default_truncs")]
    pub v: Vec<TruncConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaBlock {
    /// Extra server subsets (0-based) whose α_A and ρ_A are reported.
    #[serde(default)]
    pub subsets: Vec<Vec<usize>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// Total events over all replications, warmup included.
    pub horizon: u64,
    #[serde(default)]
    pub warmup: Option<u64>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub probes: Vec<PhiProbe>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBlock {
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub budget: Option<u64>,
    /// Tilt parameter; α when absent.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub trunc: Option<f64>,
    #[serde(default = "yes")]
    pub naive: bool,
}

/// `n` values as a list or an inclusive `{"from", "to"}` range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NRange {
    Range { from: u32, to: u32 },
    List(Vec<u32>),
}

impl NRange {
    pub fn values(&self) -> Vec<u32> {
        match self {
            NRange::Range { from, to } => (*from..=*to).collect(),
            NRange::List(ns) => ns.clone(),
        }
    }
}

fn default_taylor_grid() -> Vec<f64> {
    vec![-1.0, -0.5, 0.5, 1.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub n: NRange,
    /// Events at `n = 0`; member `n` gets `events · growth^n`.
    pub events: u64,
    #[serde(default)]
    pub growth: Option<f64>,
    #[serde(default = "default_taylor_grid")]
    pub taylor_theta: Vec<f64>,
}

fn default_r_exponent() -> f64 {
    1.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvStudyBlock {
    pub n: NRange,
    pub events: u64,
    #[serde(default)]
    pub growth: Option<f64>,
    #[serde(default = "default_taylor_grid")]
    pub taylor_theta: Vec<f64>,
    /// Limiting `b²` per component, index 0 the arrival stream.
    pub b2: Vec<f64>,
    #[serde(default = "default_r_exponent")]
    pub r_exponent: f64,
}

impl LvStudyBlock {
    pub fn study(&self) -> StudyBlock {
        StudyBlock {
            n: self.n.clone(),
            events: self.events,
            growth: self.growth,
            taylor_theta: self.taylor_theta.clone(),
        }
    }
}

fn default_probe_horizon() -> u64 {
    2_000_000
}

fn default_jumps() -> u64 {
    200_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    /// Defaults to a small grid derived from α.
    #[serde(default)]
    pub probes: Vec<PhiProbe>,
    #[serde(default = "default_probe_horizon")]
    pub horizon: u64,
    #[serde(default = "default_jumps")]
    pub jumps: u64,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        ValidateBlock {
            probes: Vec::new(),
            horizon: default_probe_horizon(),
            jumps: default_jumps(),
        }
    }
}

/// A parsed config together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub model: QueueModel,
    /// Canonical JSON (sorted keys) of the config document.
    pub canonical: String,
}

pub fn parse(text: &str) -> Result<LoadedConfig, CliError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let canonical: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let model = QueueModel::try_from(config.model.clone())?;
    Ok(LoadedConfig {
        config,
        model,
        canonical: canonical.to_string(),
    })
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
