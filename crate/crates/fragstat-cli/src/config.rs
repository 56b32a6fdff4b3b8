//! Run configuration: one flat JSON file with a section per experiment.
//! Every command-line flag has a config-file equivalent; flags win.

use anyhow::{bail, Context};
use fragstat_core::dislocation::Family;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default = "default_law")]
    pub law: Family,
    /// Seed priority: --seed flag, then this field, then FRAGSTAT_SEED, then 42.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default)]
    pub allow_invalid_law: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<TagsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewal: Option<RenewalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lln: Option<LlnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<VSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualitySection>,
}

fn default_law() -> Family {
    Family::BinaryUniform { c: 0.25 }
}

fn default_significance() -> f64 {
    0.01
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            law: default_law(),
            seed: None,
            significance: default_significance(),
            allow_invalid_law: false,
            threads: None,
            out_dir: None,
            tree: None,
            tags: None,
            renewal: None,
            rate: None,
            lln: None,
            clt: None,
            v: None,
            covariance: None,
            duality: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub epsilon: f64,
    #[serde(default = "default_one")]
    pub replicates: f64,
    /// Store genealogical paths in the fragment dump.
    #[serde(default)]
    pub paths: bool,
    /// Raw fragment dump (replicate, size[, path]); omitted when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Per-replicate summary CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TagsSection {
    pub q: u32,
    /// Horizon T; exactly one of `horizon` and `epsilon` must be given
    /// (epsilon sets T = -log epsilon).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_one")]
    pub replicates: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RenewalSection {
    /// Tagged lines pooled for the waiting-law increments test.
    #[serde(default = "default_lines")]
    pub increment_lines: f64,
    /// Horizon per line.
    #[serde(default = "default_line_horizon")]
    pub line_horizon: f64,
    /// Residual draws at `residual_t` for the stationary-law test.
    #[serde(default = "default_m5")]
    pub residual_m: f64,
    #[serde(default = "default_t50")]
    pub residual_t: f64,
    /// Stationary-sampler draws checked against the eta density.
    #[serde(default = "default_m5")]
    pub sampler_m: f64,
}

fn default_lines() -> f64 {
    60.0
}

fn default_line_horizon() -> f64 {
    1300.0
}

fn default_m5() -> f64 {
    1e5
}

fn default_t50() -> f64 {
    50.0
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub t_grid: Vec<f64>,
    pub m: f64,
    #[serde(default = "default_theta_eff")]
    pub theta_eff: f64,
    #[serde(default = "default_rate_fn")]
    pub function: String,
}

fn default_theta_eff() -> f64 {
    1.5
}

fn default_rate_fn() -> String {
    "centered:power:1".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LlnSection {
    pub epsilon_ladder: Vec<f64>,
    pub m: f64,
    pub functions: Vec<String>,
    /// Optional acceptance band for RMSE(first)/RMSE(last).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CltSection {
    pub epsilon: f64,
    pub m: f64,
    pub functions: Vec<String>,
    pub v_epsilon: f64,
    pub v_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VSection {
    pub f: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    pub epsilon_ladder: Vec<f64>,
    pub m: f64,
    /// Run the q = 4 Wick-structure check at the finest rung.
    #[serde(default)]
    pub wick: bool,
    /// Run the q = 3 odd-moment vanishing check at the finest rung.
    #[serde(default)]
    pub odd: bool,
    /// Cross-check against the coupled estimator.
    #[serde(default)]
    pub coupled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSection {
    pub functions: Vec<String>,
    pub epsilon: f64,
    pub m: f64,
    #[serde(default = "default_method")]
    pub method: String,
}

fn default_method() -> String {
    "pair_tag".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DualitySection {
    #[serde(default = "default_duality_eps")]
    pub epsilon: f64,
    #[serde(default = "default_m4")]
    pub m: f64,
    #[serde(default = "default_f_power1")]
    pub f: String,
    #[serde(default = "default_g_power2")]
    pub g: String,
}

fn default_duality_eps() -> f64 {
    1e-2
}

fn default_m4() -> f64 {
    1e4
}

fn default_f_power1() -> String {
    "power:1".into()
}

fn default_g_power2() -> String {
    "power:2".into()
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(cfg)
    }

    /// Seed resolution: flag beats file beats FRAGSTAT_SEED beats 42.
    pub fn resolve_seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(s) = self.seed {
            return Ok(s);
        }
        if let Ok(env) = std::env::var("FRAGSTAT_SEED") {
            return env
                .parse()
                .with_context(|| format!("FRAGSTAT_SEED is not a valid u64: {env}"));
        }
        Ok(42)
    }
}

/// Count-like CLI/config values ("1e6", "2000") to u64.
pub fn parse_count(value: f64, what: &str) -> anyhow::Result<u64> {
    if !value.is_finite() || !(0.0..=1e15).contains(&value) || value.fract() != 0.0 {
        bail!("{what} must be a nonnegative integer count, got {value}");
    }
    Ok(value as u64)
}
