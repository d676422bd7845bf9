//! Mask matrices and their application to feature maps.
//!
//! Both generators produce a `B x N` matrix of keep-weights in `[0, 1]`:
//! [`threshold`] yields binary masks from ranked importance scores,
//! [`rfgam`] yields soft masks from a Gaussian radiance field. Applying a
//! mask multiplies every channel of patch `j = h * W + w` by `M[b][j]`.

pub mod rfgam;
pub mod threshold;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-patch keep-weights, `B x N` with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct MaskMatrix<T> {
    values: Tensor<T>,
    binary: bool,
}

impl<T: Scalar> MaskMatrix<T> {
    /// Wrap a `B x N` tensor of keep-weights, validating the range. The
    /// binary flag is derived: it is set exactly when every value is 0 or 1.
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::shape(
                "mask.mask_matrix",
                format!("expected dims [B, N], got {:?}", values.dims()),
            ));
        }
        let mut binary = true;
        for &v in values.data() {
            if v < T::zero() || v > T::one() {
                return Err(Error::arg(
                    "mask.mask_matrix",
                    format!("mask value {v} escapes [0, 1]"),
                ));
            }
            binary &= v == T::zero() || v == T::one();
        }
        Ok(Self { values, binary })
    }

    /// Underlying `B x N` tensor.
    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.binary
    }

    /// Batch count `B`.
    pub fn batch_count(&self) -> usize {
        self.values.dims()[0]
    }

    /// Patches per batch `N`.
    pub fn token_count(&self) -> usize {
        self.values.dims()[1]
    }

    /// Keep-weights of one batch.
    pub fn batch_values(&self, index: usize) -> Result<&[T]> {
        self.values.row(index)
    }

    /// Zeros per batch.
    pub fn zero_counts(&self) -> Vec<usize> {
        (0..self.batch_count())
            .map(|b| {
                self.batch_values(b)
                    .expect("index within batch count")
                    .iter()
                    .filter(|&&v| v == T::zero())
                    .count()
            })
            .collect()
    }
}

/// Multiply features `B x C x H x W` by a `B x N` mask with `N = H * W`:
/// every channel of patch `(h, w)` scales by `M[b][h * W + w]`. Weights of
/// exactly 1 leave values bit-identical; weights of 0 zero them.
pub fn apply_mask<T: Scalar>(features: &Tensor<T>, mask: &MaskMatrix<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = features.dims()[..] else {
        return Err(Error::shape(
            "mask.apply_mask",
            format!("expected dims [B, C, H, W], got {:?}", features.dims()),
        ));
    };
    let n = h * w;
    if mask.batch_count() != b || mask.token_count() != n {
        return Err(Error::shape(
            "mask.apply_mask",
            format!(
                "mask is {}x{} but features imply {b}x{n}",
                mask.batch_count(),
                mask.token_count()
            ),
        ));
    }
    let src = features.data();
    let weights = mask.values().data();
    let mut out = vec![T::zero(); src.len()];
    for bi in 0..b {
        for ci in 0..c {
            let base = ((bi * c) + ci) * n;
            for j in 0..n {
                out[base + j] = src[base + j] * weights[bi * n + j];
            }
        }
    }
    Ok(Tensor::from_parts(features.dims().to_vec(), out))
}

/// Round to the nearest integer with exact halves rounding up.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}
