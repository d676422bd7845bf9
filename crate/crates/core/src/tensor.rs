//! Dense row-major tensors and the small set of linear-algebra kernels the
//! engine needs: matrix multiplication, row softmax, min-max normalization,
//! and the feature-map/token reshapes.
//!
//! Design notes:
//! - Data lives in one flat `Vec` in row-major order; a spatial position
//!   `(row, col)` of an `H x W` map corresponds to token index
//!   `row * W + col`.
//! - Elements are `f32` or `f64` (see [`Scalar`]); reductions (matmul inner
//!   products, softmax sums, means) always accumulate in `f64` and round back
//!   to storage precision once per output element.
//! - Constructors reject non-finite values, so downstream kernels may assume
//!   finite inputs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two values closer than this are treated as a degenerate (constant) range
/// by min-max normalization.
pub const DEGENERATE_RANGE: f64 = 1e-12;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor from dimensions and flat row-major data. Rejects
    /// element counts that disagree with the dimensions and non-finite
    /// values.
    pub fn from_vec(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor.from_vec",
                format!(
                    "dims {:?} imply {} elements but data holds {}",
                    dims,
                    expected,
                    data.len()
                ),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(
                "tensor.from_vec",
                format!("non-finite element {bad}"),
            ));
        }
        Ok(Self { dims, data })
    }

    /// Internal constructor for data produced by kernels that already
    /// guarantee the length invariant.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    /// All-zero tensor.
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self::from_parts(dims, vec![T::zero(); len])
    }

    /// Tensor filled with one value.
    pub fn filled(dims: Vec<usize>, value: T) -> Self {
        let len = dims.iter().product();
        Self::from_parts(dims, vec![value; len])
    }

    /// Dimensions, outermost first.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of axes.
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Total element count.
    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// Flat row-major data.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable flat row-major data.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Consume into the flat data vector.
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// True when every element is finite. Constructors enforce this; kernels
    /// preserve it for inputs within the documented magnitude ranges.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the same flat data under new dimensions.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != self.data.len() {
            return Err(Error::shape(
                "tensor.reshape",
                format!(
                    "cannot view {} elements as dims {:?} ({} elements)",
                    self.data.len(),
                    dims,
                    expected
                ),
            ));
        }
        Ok(Self::from_parts(dims, self.data.clone()))
    }

    /// Convert element precision (used when moving between the single
    /// precision container format and double precision math).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data = self.data.iter().map(|v| U::narrow(v.wide())).collect();
        Tensor::from_parts(self.dims.clone(), data)
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape(
                op,
                format!("expected a 2-D tensor, got dims {:?}", self.dims),
            )),
        }
    }

    /// Row `r` of a 2-D tensor as a slice.
    pub fn row(&self, r: usize) -> Result<&[T]> {
        let (rows, cols) = self.dims2("tensor.row")?;
        if r >= rows {
            return Err(Error::arg(
                "tensor.row",
                format!("row {r} out of range for {rows} rows"),
            ));
        }
        Ok(&self.data[r * cols..(r + 1) * cols])
    }

    /// Sub-tensor at `index` along the outermost axis (e.g. one batch of a
    /// `B x N x C` tensor as an `N x C` matrix).
    pub fn batch(&self, index: usize) -> Result<Self> {
        if self.dims.is_empty() {
            return Err(Error::shape(
                "tensor.batch",
                "cannot slice a rank-0 tensor".to_string(),
            ));
        }
        let outer = self.dims[0];
        if index >= outer {
            return Err(Error::arg(
                "tensor.batch",
                format!("index {index} out of range for outer dimension {outer}"),
            ));
        }
        let inner: usize = self.dims[1..].iter().product();
        let data = self.data[index * inner..(index + 1) * inner].to_vec();
        Ok(Self::from_parts(self.dims[1..].to_vec(), data))
    }

    /// Stack equally shaped tensors along a new outermost axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| {
            Error::arg("tensor.stack", "cannot stack zero tensors".to_string())
        })?;
        let mut data = Vec::with_capacity(parts.len() * first.data.len());
        for part in parts {
            if part.dims != first.dims {
                return Err(Error::shape(
                    "tensor.stack",
                    format!("mixed dims {:?} and {:?}", first.dims, part.dims),
                ));
            }
            data.extend_from_slice(&part.data);
        }
        let mut dims = Vec::with_capacity(first.dims.len() + 1);
        dims.push(parts.len());
        dims.extend_from_slice(&first.dims);
        Ok(Self::from_parts(dims, data))
    }

    /// Matrix product of two 2-D tensors, accumulated in `f64`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2("tensor.matmul")?;
        let (k2, n) = rhs.dims2("tensor.matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "tensor.matmul",
                format!("inner dimensions differ: lhs is {m}x{k}, rhs is {k2}x{n}"),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let lhs_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let mut acc = 0.0f64;
                for (l, &a) in lhs_row.iter().enumerate() {
                    acc += a.wide() * rhs.data[l * n + j].wide();
                }
                out[i * n + j] = T::narrow(acc);
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        let (rows, cols) = self.dims2("tensor.transpose")?;
        let mut out = vec![T::zero(); self.data.len()];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = self.data[r * cols + c];
            }
        }
        Ok(Self::from_parts(vec![cols, rows], out))
    }

    /// Row-wise softmax of a 2-D tensor, stabilized by subtracting each row's
    /// maximum before exponentiation.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (rows, cols) = self.dims2("tensor.softmax_rows")?;
        if cols == 0 {
            return Err(Error::shape(
                "tensor.softmax_rows",
                "rows must be non-empty".to_string(),
            ));
        }
        let mut out = vec![T::zero(); self.data.len()];
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.wide()));
            let mut sum = 0.0f64;
            let mut exps = vec![0.0f64; cols];
            for (c, &v) in row.iter().enumerate() {
                let e = (v.wide() - max).exp();
                exps[c] = e;
                sum += e;
            }
            for c in 0..cols {
                out[r * cols + c] = T::narrow(exps[c] / sum);
            }
        }
        Ok(Self::from_parts(self.dims.clone(), out))
    }

    /// Min-max normalization over all elements: affine map of `[min, max]`
    /// onto `[0, 1]`, or all `0.5` when the range is degenerate
    /// (`max - min < 1e-12`).
    pub fn minmax_normalize(&self) -> Result<Self> {
        if self.data.is_empty() {
            return Err(Error::arg(
                "tensor.minmax_normalize",
                "requires at least one element".to_string(),
            ));
        }
        let wide: Vec<f64> = self.data.iter().map(|v| v.wide()).collect();
        let normalized = minmax_normalize_f64(&wide);
        let data = normalized.into_iter().map(T::narrow).collect();
        Ok(Self::from_parts(self.dims.clone(), data))
    }

    /// Elementwise `max(x, 0)`.
    pub fn relu(&self) -> Self {
        let data = self.data.iter().map(|&v| v.max(T::zero())).collect();
        Self::from_parts(self.dims.clone(), data)
    }

    /// Elementwise scaling by a constant.
    pub fn scale(&self, factor: T) -> Self {
        let data = self.data.iter().map(|&v| v * factor).collect();
        Self::from_parts(self.dims.clone(), data)
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add(&self, rhs: &Self) -> Result<Self> {
        if self.dims != rhs.dims {
            return Err(Error::shape(
                "tensor.add",
                format!("dims {:?} and {:?} differ", self.dims, rhs.dims),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self::from_parts(self.dims.clone(), data))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn hadamard(&self, rhs: &Self) -> Result<Self> {
        if self.dims != rhs.dims {
            return Err(Error::shape(
                "tensor.hadamard",
                format!("dims {:?} and {:?} differ", self.dims, rhs.dims),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Self::from_parts(self.dims.clone(), data))
    }

    /// Add a length-`cols` bias vector to every row of a 2-D tensor.
    pub fn add_bias_rows(&self, bias: &Self) -> Result<Self> {
        let (_, cols) = self.dims2("tensor.add_bias_rows")?;
        if bias.dims != [cols] {
            return Err(Error::shape(
                "tensor.add_bias_rows",
                format!(
                    "bias dims {:?} do not match row width {cols}",
                    bias.dims
                ),
            ));
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias.data[i % cols])
            .collect();
        Ok(Self::from_parts(self.dims.clone(), data))
    }
}

/// Min-max normalization kernel shared by tensors, importance priors, and the
/// grayscale renderer. Degenerate ranges map to all `0.5`.
pub fn minmax_normalize_f64(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min < DEGENERATE_RANGE {
        return vec![0.5; values.len()];
    }
    let range = max - min;
    values.iter().map(|v| (v - min) / range).collect()
}

/// Rearrange a `B x C x H x W` feature map into `B x N x C` tokens with
/// `N = H * W`; token `j` is the channel vector at spatial position
/// `(j / W, j % W)`.
pub fn feature_to_tokens<T: Scalar>(features: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = features.dims()[..] else {
        return Err(Error::shape(
            "tensor.feature_to_tokens",
            format!("expected dims [B, C, H, W], got {:?}", features.dims()),
        ));
    };
    let n = h * w;
    let mut out = vec![T::zero(); b * n * c];
    let src = features.data();
    for bi in 0..b {
        for ci in 0..c {
            for j in 0..n {
                out[(bi * n + j) * c + ci] = src[((bi * c) + ci) * n + j];
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, n, c], out))
}

/// Inverse of [`feature_to_tokens`]: rebuild the `B x C x H x W` map from
/// `B x N x C` tokens. `height * width` must equal the token count; the
/// round trip is bit-exact.
pub fn tokens_to_feature<T: Scalar>(
    tokens: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let [b, n, c] = tokens.dims()[..] else {
        return Err(Error::shape(
            "tensor.tokens_to_feature",
            format!("expected dims [B, N, C], got {:?}", tokens.dims()),
        ));
    };
    if height * width != n {
        return Err(Error::shape(
            "tensor.tokens_to_feature",
            format!("{height}x{width} grid does not hold {n} tokens"),
        ));
    }
    let mut out = vec![T::zero(); b * c * n];
    let src = tokens.data();
    for bi in 0..b {
        for j in 0..n {
            for ci in 0..c {
                out[((bi * c) + ci) * n + j] = src[(bi * n + j) * c + ci];
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, c, height, width], out))
}
