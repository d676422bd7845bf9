//! JSON run configuration.
//!
//! A config file is a single JSON object; unknown keys are rejected and every
//! field is range-checked at load with an error naming the offending key.
//! All keys are optional except `method`:
//!
//! ```json
//! {
//!   "method": "rfgam",
//!   "rho": 0.4,
//!   "gamma": 0.5,
//!   "k_points": 16,
//!   "delta": 1.0,
//!   "k0": 0.5,
//!   "e_total": 10,
//!   "epoch": 0,
//!   "params_seed": 0,
//!   "mask_seed": 0,
//!   "scale_rhos": [0.2, 0.3, 0.4, 0.5],
//!   "warmup_fraction": 0.5
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masking method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMethod {
    /// Binary masks from ranked importance scores.
    Threshold,
    /// Soft masks from the Gaussian radiance field.
    Rfgam,
}

/// Hyperparameters of one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Which mask generator to run.
    pub method: MaskMethod,
    /// Target mask ratio rho: fraction of patches zeroed by the threshold
    /// method once warmup completes.
    #[serde(rename = "rho", default = "default_mask_ratio")]
    pub mask_ratio: f64,
    /// Fraction gamma of the masked budget drawn from the important region.
    #[serde(rename = "gamma", default = "default_important_fraction")]
    pub important_fraction: f64,
    /// Radiation point count K; clamped to the token count at run time.
    #[serde(rename = "k_points", default = "default_point_count")]
    pub point_count: usize,
    /// Threshold offset delta of the radiance-field mask.
    #[serde(rename = "delta", default = "default_threshold_offset")]
    pub threshold_offset: f64,
    /// Initial soft-band half-width k0; decays linearly over training.
    #[serde(rename = "k0", default = "default_initial_window")]
    pub initial_window: f64,
    /// Total training epochs the schedules span.
    #[serde(rename = "e_total", default = "default_total_epochs")]
    pub total_epochs: usize,
    /// Epoch this run represents; drives the rho warmup and k decay.
    #[serde(default)]
    pub epoch: usize,
    /// Seed for adapter weight initialization.
    #[serde(default)]
    pub params_seed: u64,
    /// Seed for random mask selection.
    #[serde(default)]
    pub mask_seed: u64,
    /// Per-scale target mask ratios, coarse to fine.
    #[serde(default = "default_scale_ratios")]
    pub scale_rhos: Vec<f64>,
    /// Fraction of training spent ramping rho from half target to target.
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
}

fn default_mask_ratio() -> f64 {
    0.4
}

fn default_important_fraction() -> f64 {
    0.5
}

fn default_point_count() -> usize {
    16
}

fn default_threshold_offset() -> f64 {
    1.0
}

fn default_initial_window() -> f64 {
    0.5
}

fn default_total_epochs() -> usize {
    10
}

fn default_scale_ratios() -> Vec<f64> {
    vec![0.20, 0.30, 0.40, 0.50]
}

fn default_warmup_fraction() -> f64 {
    0.5
}

impl PipelineConfig {
    /// Defaults for a given method (everything except `method` as in the
    /// module-level example).
    pub fn with_method(method: MaskMethod) -> Self {
        Self {
            method,
            mask_ratio: default_mask_ratio(),
            important_fraction: default_important_fraction(),
            point_count: default_point_count(),
            threshold_offset: default_threshold_offset(),
            initial_window: default_initial_window(),
            total_epochs: default_total_epochs(),
            epoch: 0,
            params_seed: 0,
            mask_seed: 0,
            scale_rhos: default_scale_ratios(),
            warmup_fraction: default_warmup_fraction(),
        }
    }

    /// Parse and validate a config from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Range-check every field, naming the JSON key in any rejection.
    pub fn validate(&self) -> Result<()> {
        check_unit_interval("rho", self.mask_ratio)?;
        check_unit_interval("gamma", self.important_fraction)?;
        if self.point_count == 0 {
            return Err(Error::Config("k_points must be at least 1".to_string()));
        }
        if !self.threshold_offset.is_finite() {
            return Err(Error::Config(format!(
                "delta must be finite, got {}",
                self.threshold_offset
            )));
        }
        if !self.initial_window.is_finite() || self.initial_window < 0.0 {
            return Err(Error::Config(format!(
                "k0 must be finite and non-negative, got {}",
                self.initial_window
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::Config("e_total must be at least 1".to_string()));
        }
        if self.scale_rhos.is_empty() {
            return Err(Error::Config(
                "scale_rhos must list at least one ratio".to_string(),
            ));
        }
        for (i, &rho) in self.scale_rhos.iter().enumerate() {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!(
                    "scale_rhos[{i}] must lie in [0, 1], got {rho}"
                )));
            }
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "warmup_fraction must lie in (0, 1], got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

fn check_unit_interval(key: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Config(format!(
            "{key} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}
