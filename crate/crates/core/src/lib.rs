//! Deterministic adaptive masking engine for multi-scale feature maps.
//!
//! The crate turns a `B x C x H x W` feature map into a masked copy in four
//! forward-only stages:
//!
//! 1. [`adapter`] — a residual self-attention block contextualizes the
//!    `H * W` patch tokens;
//! 2. [`importance`] — mean token similarity, min-max normalized per batch,
//!    scores every patch in `[0, 1]`;
//! 3. [`mask`] — either a binary threshold mask over ranked scores or a soft
//!    Gaussian radiance-field (RF-GAM) mask;
//! 4. application — per-patch keep-weights multiply all channels.
//!
//! [`schedule`] ramps masking intensity across scales and epochs, and
//! [`theory`] numerically verifies the concentration bound that justifies
//! estimating importance from finite batches. Everything is seeded and
//! reproducible: equal seeds give bit-identical weights, masks, and output
//! files (see [`rng`]).
//!
//! The math is generic over the scalar type ([`Scalar`]: `f32` or `f64`);
//! the serialized interfaces ([`io`]) are single precision. Concrete aliases
//! for both precisions live at the crate root.

pub mod adapter;
pub mod error;
pub mod importance;
pub mod io;
pub mod mask;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;

/// Single-precision tensor, the storage type of the container format.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor for numerically tight work.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision adapter weights.
pub type AdapterParams32 = adapter::AdapterParams<f32>;
/// Double-precision adapter weights.
pub type AdapterParams64 = adapter::AdapterParams<f64>;
/// Single-precision encoded tokens.
pub type EncodedTokens32 = adapter::EncodedTokens<f32>;
/// Double-precision encoded tokens.
pub type EncodedTokens64 = adapter::EncodedTokens<f64>;
/// Single-precision importance prior.
pub type ImportancePrior32 = importance::ImportancePrior<f32>;
/// Double-precision importance prior.
pub type ImportancePrior64 = importance::ImportancePrior<f64>;
/// Single-precision mask matrix.
pub type MaskMatrix32 = mask::MaskMatrix<f32>;
/// Double-precision mask matrix.
pub type MaskMatrix64 = mask::MaskMatrix<f64>;
/// Single-precision intensity field.
pub type IntensityField32 = mask::rfgam::IntensityField<f32>;
/// Double-precision intensity field.
pub type IntensityField64 = mask::rfgam::IntensityField<f64>;
