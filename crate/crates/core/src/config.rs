//! Study configuration files.
//!
//! Every CLI study command reads a TOML config describing the population,
//! the predictor, and study parameters. Paths inside a config resolve
//! relative to the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSchema;
use crate::metrics::RecenterMode;
use crate::simulation::{LambdaPolicy, LearningCurve, PopulationConfig, PredictorModel};
use crate::uncertainty::{CiMethod, IntervalSpec};

/// Lambda policy as written in configs: `"unrectified"`, `"opt"`, or
/// `{ lambda = 0.5 }`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Named(String),
    Fixed { lambda: f64 },
}

impl PolicySpec {
    pub fn to_policy(&self) -> Result<LambdaPolicy> {
        match self {
            PolicySpec::Named(name) => match name.as_str() {
                "unrectified" => Ok(LambdaPolicy::Unrectified),
                "opt" => Ok(LambdaPolicy::Opt),
                other => Err(Error::InvalidConfig(format!(
                    "unknown lambda policy {other:?}; use \"unrectified\", \"opt\", or {{ lambda = x }}"
                ))),
            },
            PolicySpec::Fixed { lambda } => Ok(LambdaPolicy::Fixed(*lambda)),
        }
    }
}

fn default_policies() -> Vec<PolicySpec> {
    vec![
        PolicySpec::Named("unrectified".into()),
        PolicySpec::Fixed { lambda: 1.0 },
        PolicySpec::Named("opt".into()),
    ]
}

/// Interval settings as they appear in configs; the seed is injected by the
/// command line. Reports default to the bootstrap; the analytic-normal
/// fast path is opt-in.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(default)]
pub struct IntervalSection {
    pub level: f64,
    pub method: CiMethod,
    pub bootstrap_b: usize,
    pub retune_lambda: bool,
}

impl Default for IntervalSection {
    fn default() -> Self {
        IntervalSection {
            level: 0.95,
            method: CiMethod::BootstrapPercentile,
            bootstrap_b: 2000,
            retune_lambda: false,
        }
    }
}

impl IntervalSection {
    pub fn to_spec(self, seed: u64) -> IntervalSpec {
        IntervalSpec {
            level: self.level,
            method: self.method,
            bootstrap_b: self.bootstrap_b,
            seed,
            retune_lambda: self.retune_lambda,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct StudySection {
    pub n_human: usize,
    pub replications: usize,
    #[serde(default)]
    pub superpopulation: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SimulateConfig {
    pub population: PopulationConfig,
    /// Absent when the CLI selects a shipped profile instead.
    pub predictor: Option<PredictorModel>,
    pub study: StudySection,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub interval: IntervalSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct CoverageConfig {
    pub population: PopulationConfig,
    pub predictor: PredictorModel,
    pub study: StudySection,
    /// Lambda policy under test; defaults to the power-tuned estimator.
    pub policy: Option<PolicySpec>,
    /// Interval methods to score; defaults to both.
    pub methods: Option<Vec<CiMethod>>,
    #[serde(default)]
    pub interval: IntervalSection,
}

fn default_n_human_grid() -> Vec<usize> {
    vec![50, 100, 150, 200]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct EssCurveConfig {
    pub population: PopulationConfig,
    pub predictor: PredictorModel,
    #[serde(default = "default_n_human_grid")]
    pub n_human_grid: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub superpopulation: bool,
    #[serde(default)]
    pub interval: IntervalSection,
}

/// Learning-curve section with shipped defaults; `s0` falls back to a
/// multiple of the population response spread when omitted.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(default)]
pub struct CurveSection {
    pub b0: f64,
    pub tau: f64,
    pub s0: Option<f64>,
    pub s0_sd_multiple: f64,
    pub kappa: f64,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            b0: 0.35,
            tau: 450.0,
            s0: None,
            s0_sd_multiple: 2.4,
            kappa: 300.0,
        }
    }
}

impl CurveSection {
    pub fn to_curve(self, pop: &PopulationConfig) -> LearningCurve {
        LearningCurve {
            b0: self.b0,
            tau: self.tau,
            s0: self.s0.unwrap_or(self.s0_sd_multiple * pop.response_sd()),
            kappa: self.kappa,
        }
    }
}

fn default_shares() -> Vec<f64> {
    vec![0.1, 0.2, 0.4, 0.6, 0.8]
}

fn default_budget() -> usize {
    1000
}

fn default_allocation_replications() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AllocateConfig {
    pub population: PopulationConfig,
    #[serde(default)]
    pub curve: CurveSection,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_shares")]
    pub shares: Vec<f64>,
    #[serde(default = "default_allocation_replications")]
    pub replications: usize,
    #[serde(default)]
    pub interval: IntervalSection,
}

/// Column roles for a frame referenced from a config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SchemaSection {
    pub id_col: Option<String>,
    #[serde(default)]
    pub covariate_cols: Vec<String>,
    #[serde(default)]
    pub group_cols: Vec<String>,
    pub response_col: Option<String>,
    pub prediction_col: String,
}

impl SchemaSection {
    pub fn to_schema(&self) -> FrameSchema {
        FrameSchema {
            id_col: self.id_col.clone(),
            covariate_cols: self.covariate_cols.clone(),
            group_cols: self.group_cols.clone(),
            response_col: self.response_col.clone(),
            prediction_col: self.prediction_col.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecenterSection {
    #[default]
    Additive,
    Multiplicative,
}

impl From<RecenterSection> for RecenterMode {
    fn from(s: RecenterSection) -> RecenterMode {
        match s {
            RecenterSection::Additive => RecenterMode::Additive,
            RecenterSection::Multiplicative => RecenterMode::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SubgroupConfig {
    /// Labeled evaluation frame: ground truth, predictions, and groups.
    pub frame: PathBuf,
    pub schema: SchemaSection,
    /// Ordinal map file; numeric passthrough when absent.
    pub map: Option<PathBuf>,
    pub group_key: String,
    /// Size of the labeled set drawn to produce the rectified estimate.
    pub n_human: usize,
    #[serde(default)]
    pub recenter: RecenterSection,
    #[serde(default)]
    pub interval: IntervalSection,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Resolve a path relative to the directory of the config file it came from.
pub fn resolve_relative(config_path: &Path, inner: &Path) -> PathBuf {
    if inner.is_absolute() {
        inner.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(inner)
    }
}

pub fn load_simulate_config(path: &Path) -> Result<SimulateConfig> {
    read_toml(path)
}

pub fn load_coverage_config(path: &Path) -> Result<CoverageConfig> {
    read_toml(path)
}

pub fn load_ess_curve_config(path: &Path) -> Result<EssCurveConfig> {
    read_toml(path)
}

pub fn load_allocate_config(path: &Path) -> Result<AllocateConfig> {
    read_toml(path)
}

pub fn load_subgroup_config(path: &Path) -> Result<SubgroupConfig> {
    read_toml(path)
}

/// The four shipped predictor presets. They are presets with distinct
/// (bias, correlation) settings whose report rows line up with the named
/// synthesis strategies; no behavioral fidelity to any actual model is
/// claimed. Scales assume the shipped default population (mean 5, sd 1):
/// population-level bias stays in the tens of percent while individual
/// predictions are noisy, so the tuned weight lands well below 1.
pub fn profile_predictor(name: &str) -> Result<PredictorModel> {
    match name {
        "demo-only" => Ok(PredictorModel::MultiplicativeBias {
            factor: 1.55,
            noise: 4.0,
        }),
        "persona" => Ok(PredictorModel::MultiplicativeBias {
            factor: 1.5,
            noise: 2.8,
        }),
        "domain-ft" => Ok(PredictorModel::MultiplicativeBias {
            factor: 1.35,
            noise: 3.2,
        }),
        "subpop-ft" => Ok(PredictorModel::MultiplicativeBias {
            factor: 1.85,
            noise: 4.5,
        }),
        other => Err(Error::InvalidConfig(format!(
            "unknown profile {other:?}; use demo-only, persona, domain-ft, or subpop-ft"
        ))),
    }
}

pub const PROFILE_NAMES: [&str; 4] = ["demo-only", "persona", "domain-ft", "subpop-ft"];
