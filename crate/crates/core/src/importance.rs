//! Importance priors over patches.
//!
//! The raw importance of patch `j` is its mean inner product with every
//! token of the same batch (self included):
//!
//! ```text
//! raw[j] = (1/N) * sum_l <T[j], T[l]>
//! ```
//!
//! which equals `<T[j], mean_l T[l]>` by linearity; the implementation uses
//! the mean-vector form (O(N*C)) while [`patch_importance`] keeps the
//! definitional double loop for spot checks. Raw scores are min-max
//! normalized per batch into `[0, 1]`; a degenerate batch (all raw scores
//! within 1e-12) maps to a uniform 0.5. All accumulation is in `f64`.

use crate::adapter::EncodedTokens;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{minmax_normalize_f64, Tensor};

/// Per-batch normalized importance scores, a `B x N` tensor in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ImportancePrior<T> {
    scores: Tensor<T>,
}

impl<T: Scalar> ImportancePrior<T> {
    /// Wrap a `B x N` score tensor, validating the `[0, 1]` range.
    pub fn from_scores(scores: Tensor<T>) -> Result<Self> {
        if scores.rank() != 2 {
            return Err(Error::shape(
                "importance.from_scores",
                format!("expected dims [B, N], got {:?}", scores.dims()),
            ));
        }
        if let Some(bad) = scores
            .data()
            .iter()
            .find(|v| **v < T::zero() || **v > T::one())
        {
            return Err(Error::arg(
                "importance.from_scores",
                format!("score {bad} escapes [0, 1]"),
            ));
        }
        Ok(Self { scores })
    }

    /// Underlying `B x N` tensor.
    pub fn scores(&self) -> &Tensor<T> {
        &self.scores
    }

    /// Batch count `B`.
    pub fn batch_count(&self) -> usize {
        self.scores.dims()[0]
    }

    /// Patches per batch `N`.
    pub fn token_count(&self) -> usize {
        self.scores.dims()[1]
    }

    /// Scores of one batch.
    pub fn batch_scores(&self, index: usize) -> Result<&[T]> {
        self.scores.row(index)
    }
}

/// Raw (unnormalized) importance of patch `index` within an `N x C` token
/// matrix: the definitional mean of inner products, accumulated in `f64`.
pub fn patch_importance<T: Scalar>(index: usize, tokens: &Tensor<T>) -> Result<f64> {
    let [n, c] = tokens.dims()[..] else {
        return Err(Error::shape(
            "importance.patch_importance",
            format!("expected dims [N, C], got {:?}", tokens.dims()),
        ));
    };
    if index >= n {
        return Err(Error::arg(
            "importance.patch_importance",
            format!("patch {index} out of range for {n} tokens"),
        ));
    }
    let data = tokens.data();
    let row = &data[index * c..(index + 1) * c];
    let mut total = 0.0f64;
    for l in 0..n {
        let other = &data[l * c..(l + 1) * c];
        let mut dot = 0.0f64;
        for (a, b) in row.iter().zip(other) {
            dot += a.wide() * b.wide();
        }
        total += dot;
    }
    Ok(total / n as f64)
}

/// Importance prior over encoded tokens: per-batch raw importances, min-max
/// normalized into `[0, 1]`.
pub fn importance_prior<T: Scalar>(tokens: &EncodedTokens<T>) -> Result<ImportancePrior<T>> {
    let b = tokens.batch_count();
    let n = tokens.token_count();
    let c = tokens.channels();
    if n == 0 {
        return Err(Error::shape(
            "importance.importance_prior",
            "token count must be at least 1".to_string(),
        ));
    }
    let data = tokens.tensor().data();
    let mut scores = Vec::with_capacity(b * n);
    for bi in 0..b {
        let batch = &data[bi * n * c..(bi + 1) * n * c];
        // Column means: raw[j] = <T[j], mean_l T[l]>.
        let mut mean = vec![0.0f64; c];
        for l in 0..n {
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += batch[l * c + ch].wide();
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut raw = vec![0.0f64; n];
        for (j, r) in raw.iter_mut().enumerate() {
            let mut dot = 0.0f64;
            for (ch, m) in mean.iter().enumerate() {
                dot += batch[j * c + ch].wide() * m;
            }
            *r = dot;
        }
        scores.extend(minmax_normalize_f64(&raw).into_iter().map(T::narrow));
    }
    ImportancePrior::from_scores(Tensor::from_parts(vec![b, n], scores))
}
