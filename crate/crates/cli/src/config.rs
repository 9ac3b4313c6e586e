//! Run configuration: one JSON file, overridden by command-line flags, with
//! `SZEGO_PRECISION` as the only environment override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use szego_core::verify::Tolerances;

pub const PRECISION_ENV: &str = "SZEGO_PRECISION";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub weights: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MRange {
    pub min: u64,
    pub max: u64,
}

/// Partial tolerance overrides; missing fields keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1_local: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_stability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sp_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub haar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lap_char: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route_slope_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route_coeff: Option<f64>,
}

impl ToleranceConfig {
    pub fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { t.$f = v; } )* };
        }
        take!(a0, a1, b0, b1, b1_local, fit_stability, sp_slope, gaussian, group_integral, haar, lap_char, route_slope_margin, route_coeff);
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exp: Vec<u8>,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ExpandMode {
    /// A polynomial phase and amplitude given term by term.
    Polynomial,
    /// The orbit integral of the configured model and weight.
    Orbit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExpandConfig {
    pub mode: ExpandMode,
    #[serde(default)]
    pub dim: usize,
    #[serde(default)]
    pub phase: Vec<Term>,
    #[serde(default)]
    pub amplitude: Vec<Term>,
    /// Degrees at which the truncated expansion is evaluated.
    #[serde(default)]
    pub m_values: Vec<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

fn default_terms() -> usize {
    5
}

fn default_precision() -> u32 {
    128
}

fn default_jmax() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Weight of the isotypic component for kernel, fit, coeffs and expand.
    pub k: Vec<i64>,
    /// Weights checked by verify; defaults to `[k]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<Vec<i64>>>,
    pub m_range: MRange,
    #[serde(default = "default_terms")]
    pub fit_terms: usize,
    #[serde(default = "default_precision")]
    pub precision_bits: u32,
    #[serde(default = "default_jmax")]
    pub jmax: usize,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Criteria run by verify; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expand: Option<ExpandConfig>,
    #[serde(default)]
    pub emit_timings: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Apply `SZEGO_PRECISION` if it is set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(PRECISION_ENV) {
            self.precision_bits = v.trim().parse().map_err(|_| ConfigError::Invalid(format!("{PRECISION_ENV}={v:?} is not an integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if self.precision_bits < 64 {
            return bad(format!("precision_bits = {} is below 64", self.precision_bits));
        }
        if self.m_range.min >= self.m_range.max {
            return bad(format!("m_range.min = {} must be below m_range.max = {}", self.m_range.min, self.m_range.max));
        }
        let d = self.model.weights.len();
        if self.k.len() != d {
            return bad(format!("k has {} entries but the model has {d} weight rows", self.k.len()));
        }
        if let Some(ks) = &self.ks {
            if ks.is_empty() || ks.iter().any(|k| k.len() != d) {
                return bad(format!("every entry of ks needs {d} components"));
            }
        }
        if self.fit_terms == 0 {
            return bad("fit_terms must be positive".into());
        }
        if let Some(c) = &self.criteria {
            if c.iter().any(|x| !(1..=8).contains(x)) {
                return bad("criteria must be numbers from 1 to 8".into());
            }
        }
        if let Some(e) = &self.expand {
            if e.mode == ExpandMode::Polynomial {
                if e.dim == 0 || e.phase.is_empty() {
                    return bad("polynomial expansion needs dim and phase terms".into());
                }
                if e.phase.iter().chain(&e.amplitude).any(|t| t.exp.len() != e.dim) {
                    return bad(format!("every term exponent needs {} entries", e.dim));
                }
            }
        }
        Ok(())
    }

    pub fn ks(&self) -> Vec<Vec<i64>> {
        self.ks.clone().unwrap_or_else(|| vec![self.k.clone()])
    }
}
