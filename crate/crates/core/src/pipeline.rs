//! End-to-end single-precision pipeline: features in, masked features out.
//!
//! A run reads a `features` entry (`B x C x H x W`) from a tensor container,
//! encodes tokens with adapter weights initialized from `params_seed`,
//! derives the importance prior, generates the configured mask, applies it,
//! and writes one output container holding `prior` (`B x N`), `mask`
//! (`B x N`), `masked_features` (`B x C x H x W`), and — for the radiance
//! field method — `intensity` (`B x H x W`).
//!
//! The schedules modulate the run: the effective threshold ratio is
//! `rho_at_epoch(rho, epoch, ...)` and the effective soft-band half-width is
//! `k_at_epoch(k0, epoch, ...)`; the radiation point count is clamped to the
//! token count. Given equal config and input bytes, reruns produce
//! byte-identical output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::adapter::{encode_tokens, AdapterParams, EncodedTokens};
use crate::error::{Error, Result};
use crate::importance::{importance_prior, ImportancePrior};
use crate::io::config::{MaskMethod, PipelineConfig};
use crate::io::tensor_file::TensorFile;
use crate::mask::rfgam::{
    intensity_field, rfgam_mask_per_batch, select_radiation_points, IntensityField,
};
use crate::mask::threshold::{threshold_mask, ThresholdMaskConfig};
use crate::mask::{apply_mask, MaskMatrix};
use crate::schedule::{k_at_epoch, rho_at_epoch};
use crate::tensor::{feature_to_tokens, Tensor};

/// Name of the input entry a pipeline run expects.
pub const FEATURES_ENTRY: &str = "features";
/// Output entry: importance prior, `B x N`.
pub const PRIOR_ENTRY: &str = "prior";
/// Output entry: mask matrix, `B x N`.
pub const MASK_ENTRY: &str = "mask";
/// Output entry: masked feature map, `B x C x H x W`.
pub const MASKED_ENTRY: &str = "masked_features";
/// Output entry (radiance-field method only): intensity grid, `B x H x W`.
pub const INTENSITY_ENTRY: &str = "intensity";
/// File name of the output container inside the output directory.
pub const OUTPUT_FILE_NAME: &str = "outputs.amzt";

/// Per-batch mask composition, loggable as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct BatchMaskStats {
    /// Batch index.
    pub batch: usize,
    /// Patches with weight exactly 0.
    pub zeros: usize,
    /// Patches strictly between 0 and 1.
    pub soft: usize,
    /// Patches with weight exactly 1.
    pub ones: usize,
    /// Patches per batch.
    pub total: usize,
}

/// Result of a pipeline run.
#[derive(Debug)]
pub struct PipelineRun {
    /// Path of the written output container.
    pub output_path: PathBuf,
    /// Mask composition per batch.
    pub stats: Vec<BatchMaskStats>,
}

/// Read the `features` entry of an input container.
pub fn load_features(path: &Path) -> Result<Tensor<f32>> {
    let file = TensorFile::read(path)?;
    let features = file.get(FEATURES_ENTRY).ok_or_else(|| {
        Error::arg(
            "pipeline.load_features",
            format!(
                "input holds no {FEATURES_ENTRY:?} entry (found: {:?})",
                file.names().collect::<Vec<_>>()
            ),
        )
    })?;
    if features.rank() != 4 {
        return Err(Error::shape(
            "pipeline.load_features",
            format!("features must have dims [B, C, H, W], got {:?}", features.dims()),
        ));
    }
    Ok(features.clone())
}

/// Effective threshold mask ratio of a config at its epoch.
pub fn effective_mask_ratio(config: &PipelineConfig) -> f64 {
    rho_at_epoch(
        config.mask_ratio,
        config.epoch,
        config.total_epochs,
        config.warmup_fraction,
    )
}

/// Effective soft-band half-width of a config at its epoch.
pub fn effective_window(config: &PipelineConfig) -> Result<f64> {
    k_at_epoch(config.initial_window, config.epoch, config.total_epochs)
}

/// Encode features and derive the importance prior.
pub fn compute_prior(
    features: &Tensor<f32>,
    params: &AdapterParams<f32>,
) -> Result<(EncodedTokens<f32>, ImportancePrior<f32>)> {
    let tokens = encode_tokens(&feature_to_tokens(features)?, params)?;
    let prior = importance_prior(&tokens)?;
    Ok((tokens, prior))
}

/// Generate the configured mask for encoded features. Returns the mask and,
/// for the radiance-field method, the intensity field.
pub fn build_mask(
    config: &PipelineConfig,
    prior: &ImportancePrior<f32>,
    tokens: &EncodedTokens<f32>,
    params: &AdapterParams<f32>,
    height: usize,
    width: usize,
) -> Result<(MaskMatrix<f32>, Option<IntensityField<f32>>)> {
    config.validate()?;
    match config.method {
        MaskMethod::Threshold => {
            let mask = threshold_mask(
                prior,
                &ThresholdMaskConfig {
                    mask_ratio: effective_mask_ratio(config),
                    important_fraction: config.important_fraction,
                    seed: config.mask_seed,
                },
            )?;
            Ok((mask, None))
        }
        MaskMethod::Rfgam => {
            let n = prior.token_count();
            let point_count = config.point_count.min(n);
            if point_count < config.point_count {
                log::debug!(
                    "clamping radiation point count {} to token count {n}",
                    config.point_count
                );
            }
            let points =
                select_radiation_points(prior, tokens, params, height, width, point_count)?;
            let field = intensity_field(&points, height, width)?;
            let window = effective_window(config)?;
            let mask = rfgam_mask_per_batch(&field, config.threshold_offset, window)?;
            Ok((mask, Some(field)))
        }
    }
}

/// Mask composition per batch.
pub fn mask_stats(mask: &MaskMatrix<f32>) -> Vec<BatchMaskStats> {
    (0..mask.batch_count())
        .map(|b| {
            let values = mask.batch_values(b).expect("index within batch count");
            let zeros = values.iter().filter(|&&v| v == 0.0).count();
            let ones = values.iter().filter(|&&v| v == 1.0).count();
            BatchMaskStats {
                batch: b,
                zeros,
                soft: values.len() - zeros - ones,
                ones,
                total: values.len(),
            }
        })
        .collect()
}

/// Run the full pipeline: load features, encode, mask, apply, and write the
/// output container into `out_dir`.
pub fn run_pipeline(
    config: &PipelineConfig,
    input_path: &Path,
    out_dir: &Path,
) -> Result<PipelineRun> {
    config.validate()?;
    let features = load_features(input_path)?;
    let [_, _, h, w] = features.dims()[..] else {
        unreachable!("load_features validates rank 4");
    };
    log::info!(
        "pipeline: features {:?}, method {:?}, epoch {}/{}",
        features.dims(),
        config.method,
        config.epoch,
        config.total_epochs
    );
    let params = AdapterParams::<f32>::init(features.dims()[1], config.params_seed)?;
    let (tokens, prior) = compute_prior(&features, &params)?;
    let (mask, field) = build_mask(config, &prior, &tokens, &params, h, w)?;
    let masked = apply_mask(&features, &mask)?;

    fs::create_dir_all(out_dir)?;
    let output_path = out_dir.join(OUTPUT_FILE_NAME);
    let mut out = TensorFile::new();
    out.insert(PRIOR_ENTRY, prior.scores().clone())
        .map_err(Error::Format)?;
    out.insert(MASK_ENTRY, mask.values().clone())
        .map_err(Error::Format)?;
    out.insert(MASKED_ENTRY, masked).map_err(Error::Format)?;
    if let Some(field) = &field {
        out.insert(INTENSITY_ENTRY, field.grid().clone())
            .map_err(Error::Format)?;
    }
    out.write(&output_path)?;

    Ok(PipelineRun {
        output_path,
        stats: mask_stats(&mask),
    })
}
