//! Threshold-based binary masking.
//!
//! Given a normalized importance prior, each batch masks exactly
//! `n_total = round_half_up(rho * N)` patches. The `n_total` highest-scoring
//! patches (ties broken toward the lower index) form the important region;
//! `n_imp = round_half_up(gamma * n_total)` of them are drawn uniformly at
//! random and masked, and the remaining budget is drawn uniformly from the
//! complement. When the complement is too small to absorb that remainder,
//! the deficit spills back into still-unmasked important patches, so the
//! total count always holds exactly.
//!
//! Randomness comes from one substream per batch (`stream = batch index` of
//! the configured seed), which makes masks reproducible and batch-order
//! independent.

use crate::error::{Error, Result};
use crate::importance::ImportancePrior;
use crate::mask::{round_half_up, MaskMatrix};
use crate::rng::{sample_without_replacement, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Threshold mask hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdMaskConfig {
    /// Fraction rho of patches to mask, in `[0, 1]`.
    pub mask_ratio: f64,
    /// Fraction gamma of the masked budget drawn from the important region,
    /// in `[0, 1]`.
    pub important_fraction: f64,
    /// Seed of the per-batch mask substreams.
    pub seed: u64,
}

impl ThresholdMaskConfig {
    fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mask_ratio", self.mask_ratio),
            ("important_fraction", self.important_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::arg(
                    "mask.threshold_mask",
                    format!("{name} must lie in [0, 1], got {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Indices of the `count` highest scores, ties broken toward the lower
/// index, returned sorted ascending.
fn top_indices<T: Scalar>(scores: &[T], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut top = order[..count].to_vec();
    top.sort_unstable();
    top
}

/// Generate a binary mask from an importance prior. Exactly
/// `round_half_up(rho * N)` patches per batch receive weight 0.
pub fn threshold_mask<T: Scalar>(
    prior: &ImportancePrior<T>,
    config: &ThresholdMaskConfig,
) -> Result<MaskMatrix<T>> {
    config.validate()?;
    let b = prior.batch_count();
    let n = prior.token_count();
    let mut values = vec![T::one(); b * n];
    for bi in 0..b {
        let scores = prior.batch_scores(bi)?;
        let n_total = round_half_up(config.mask_ratio * n as f64);
        let n_imp = round_half_up(config.important_fraction * n_total as f64);
        let mut rng = SeededRng::with_stream(config.seed, bi as u64);

        let important = top_indices(scores, n_total);
        let complement: Vec<usize> = {
            let mut in_region = vec![false; n];
            for &j in &important {
                in_region[j] = true;
            }
            (0..n).filter(|&j| !in_region[j]).collect()
        };

        let mut masked = vec![false; n];
        // Stage 1: random important patches.
        for pos in sample_without_replacement(important.len(), n_imp, &mut rng)? {
            masked[important[pos]] = true;
        }
        // Stage 2: random complement patches.
        let wanted_rest = n_total - n_imp;
        let from_rest = wanted_rest.min(complement.len());
        for pos in sample_without_replacement(complement.len(), from_rest, &mut rng)? {
            masked[complement[pos]] = true;
        }
        // Stage 3: spill any deficit back into unmasked important patches.
        let deficit = wanted_rest - from_rest;
        if deficit > 0 {
            let spill_pool: Vec<usize> =
                important.iter().copied().filter(|&j| !masked[j]).collect();
            for pos in sample_without_replacement(spill_pool.len(), deficit, &mut rng)? {
                masked[spill_pool[pos]] = true;
            }
        }

        for (j, &is_masked) in masked.iter().enumerate() {
            if is_masked {
                values[bi * n + j] = T::zero();
            }
        }
    }
    MaskMatrix::new(Tensor::from_parts(vec![b, n], values))
}
