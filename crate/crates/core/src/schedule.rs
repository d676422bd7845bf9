//! Progressive masking schedules.
//!
//! Two quantities evolve over training:
//!
//! - the soft-band half-width `k` decays linearly from `k0` to 0:
//!   `k(epoch) = k0 * (1 - epoch / E_total)`, clamped at 0 past the end;
//! - the per-scale mask ratio `rho` ramps linearly from half its target at
//!   epoch 0 to the full target at the end of warmup
//!   (`ceil(warmup_fraction * E_total)` epochs) and stays there.
//!
//! Defaults follow the reference setup: per-scale targets
//! `[0.20, 0.30, 0.40, 0.50]` from coarsest to finest, `k0 = 0.5`, and a
//! warmup spanning half of training.

use serde::Serialize;

use crate::error::{Error, Result};

/// Schedule hyperparameters.
#[derive(Debug, Clone)]
pub struct ScheduleConfig {
    /// Initial soft-band half-width `k0`.
    pub initial_window: f64,
    /// Total training epochs `E_total` (at least 1).
    pub total_epochs: usize,
    /// Target mask ratios per scale, coarse to fine.
    pub scale_ratios: Vec<f64>,
    /// Fraction of training spent ramping rho, in `(0, 1]`.
    pub warmup_fraction: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            initial_window: 0.5,
            total_epochs: 10,
            scale_ratios: vec![0.20, 0.30, 0.40, 0.50],
            warmup_fraction: 0.5,
        }
    }
}

impl ScheduleConfig {
    /// Range-check every field.
    pub fn validate(&self) -> Result<()> {
        let op = "schedule.config";
        if !(self.initial_window.is_finite() && self.initial_window >= 0.0) {
            return Err(Error::arg(
                op,
                format!("initial window {} must be non-negative", self.initial_window),
            ));
        }
        if self.total_epochs == 0 {
            return Err(Error::arg(op, "total epochs must be at least 1".to_string()));
        }
        if self.scale_ratios.is_empty() {
            return Err(Error::arg(op, "at least one scale ratio required".to_string()));
        }
        for (i, &rho) in self.scale_ratios.iter().enumerate() {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::arg(
                    op,
                    format!("scale ratio [{i}] must lie in [0, 1], got {rho}"),
                ));
            }
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return Err(Error::arg(
                op,
                format!("warmup fraction must lie in (0, 1], got {}", self.warmup_fraction),
            ));
        }
        Ok(())
    }
}

/// Mask intensity plan of one scale at one epoch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalePlan {
    /// Scale index, coarse to fine.
    pub scale: usize,
    /// Effective mask ratio rho at this epoch.
    pub rho: f64,
    /// Soft-band half-width k at this epoch.
    pub k: f64,
}

/// Soft-band half-width at an epoch: `k0 * (1 - epoch / E_total)`, exactly
/// `k0` at epoch 0, exactly 0 at `E_total`, clamped at 0 beyond.
pub fn k_at_epoch(initial_window: f64, epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::arg(
            "schedule.k_at_epoch",
            "total epochs must be at least 1".to_string(),
        ));
    }
    if epoch >= total_epochs {
        return Ok(0.0);
    }
    Ok(initial_window * (1.0 - epoch as f64 / total_epochs as f64))
}

/// Mask ratio at an epoch: linear from `target / 2` at epoch 0 to `target`
/// at the end of warmup (`ceil(warmup_fraction * E_total)` epochs), constant
/// afterward.
pub fn rho_at_epoch(
    target: f64,
    epoch: usize,
    total_epochs: usize,
    warmup_fraction: f64,
) -> f64 {
    let warmup_end = (warmup_fraction * total_epochs as f64).ceil() as usize;
    if epoch >= warmup_end {
        return target;
    }
    let progress = epoch as f64 / warmup_end as f64;
    target / 2.0 * (1.0 + progress)
}

/// Per-scale `(rho, k)` plan at an epoch.
pub fn scale_plan(config: &ScheduleConfig, epoch: usize) -> Result<Vec<ScalePlan>> {
    config.validate()?;
    let k = k_at_epoch(config.initial_window, epoch, config.total_epochs)?;
    Ok(config
        .scale_ratios
        .iter()
        .enumerate()
        .map(|(scale, &target)| ScalePlan {
            scale,
            rho: rho_at_epoch(target, epoch, config.total_epochs, config.warmup_fraction),
            k,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_starts_at_k0_exactly() {
        assert_eq!(k_at_epoch(0.5, 0, 10).unwrap(), 0.5);
    }

    #[test]
    fn window_halves_at_midpoint() {
        assert_eq!(k_at_epoch(0.5, 5, 10).unwrap(), 0.25);
    }

    #[test]
    fn window_reaches_zero_at_the_end_and_stays() {
        assert_eq!(k_at_epoch(0.5, 10, 10).unwrap(), 0.0);
        assert_eq!(k_at_epoch(0.5, 17, 10).unwrap(), 0.0);
    }

    #[test]
    fn window_rejects_zero_epochs() {
        assert!(k_at_epoch(0.5, 0, 0).is_err());
    }

    #[test]
    fn window_is_non_increasing() {
        let mut last = f64::INFINITY;
        for epoch in 0..=12 {
            let k = k_at_epoch(0.7, epoch, 9).unwrap();
            assert!(k <= last, "k grew at epoch {epoch}");
            last = k;
        }
    }

    #[test]
    fn ratio_starts_at_half_target() {
        assert_eq!(rho_at_epoch(0.4, 0, 10, 0.5), 0.2);
    }

    #[test]
    fn ratio_reaches_target_at_warmup_end() {
        assert_eq!(rho_at_epoch(0.4, 5, 10, 0.5), 0.4);
        assert_eq!(rho_at_epoch(0.4, 9, 10, 0.5), 0.4);
    }

    #[test]
    fn ratio_hits_three_quarters_halfway_through_warmup() {
        // Warmup ends at epoch 10 of 20; halfway (epoch 5) gives
        // 0.2 + 0.2 * 0.5 = 0.3.
        assert!((rho_at_epoch(0.4, 5, 20, 0.5) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ratio_is_non_decreasing_and_bounded_by_target() {
        for epoch in 0..=20 {
            let rho = rho_at_epoch(0.5, epoch, 20, 0.6);
            let next = rho_at_epoch(0.5, epoch + 1, 20, 0.6);
            assert!(next >= rho, "rho decreased at epoch {epoch}");
            assert!(rho <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn default_plan_reaches_reference_targets_after_warmup() {
        let config = ScheduleConfig::default();
        let plan = scale_plan(&config, 9).unwrap();
        let rhos: Vec<f64> = plan.iter().map(|p| p.rho).collect();
        assert_eq!(rhos, vec![0.20, 0.30, 0.40, 0.50]);
    }

    #[test]
    fn plan_at_epoch_zero_halves_every_target() {
        let config = ScheduleConfig::default();
        let plan = scale_plan(&config, 0).unwrap();
        let rhos: Vec<f64> = plan.iter().map(|p| p.rho).collect();
        assert_eq!(rhos, vec![0.10, 0.15, 0.20, 0.25]);
        assert_eq!(plan[0].k, 0.5);
    }

    #[test]
    fn plan_rejects_invalid_config() {
        let config = ScheduleConfig {
            scale_ratios: vec![1.4],
            ..Default::default()
        };
        assert!(scale_plan(&config, 0).is_err());
    }
}
