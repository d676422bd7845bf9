//! Residual self-attention adapter.
//!
//! The adapter turns `B x N x C` patch embeddings into contextualized tokens
//! with a single attention head followed by a residual ReLU MLP:
//!
//! ```text
//! A  = softmax_rows((X Wq)(X Wk)^T / sqrt(C))
//! Z  = X + (A (X Wv)) Wo
//! T  = Z + ffn2(relu(ffn1(Z)))
//! ```
//!
//! It also answers two per-patch queries used by the radiance-field mask:
//! cross-attention of one patch vector against a token set (sharing the same
//! projections), and a variance estimate from a small ReLU head over the
//! concatenated patch and context vectors, floored at epsilon = 1e-6.
//!
//! There is no positional encoding, so permuting tokens permutes every
//! output the same way. Weights initialize Xavier-uniform from a seeded
//! generator (biases zero); the same seed reproduces identical parameters
//! bit for bit.

use crate::error::{Error, Result};
use crate::io::tensor_file::TensorFile;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Additive floor keeping variance estimates strictly positive.
pub const VARIANCE_EPSILON: f64 = 1e-6;

/// Hidden width multiplier of the token MLP.
const FFN_MULTIPLIER: usize = 4;

/// Entry names (and canonical order) of a serialized parameter file.
pub const PARAM_NAMES: [&str; 12] = [
    "w_q",
    "w_k",
    "w_v",
    "w_o",
    "ffn1_w",
    "ffn1_b",
    "ffn2_w",
    "ffn2_b",
    "sigma_ffn1_w",
    "sigma_ffn1_b",
    "sigma_ffn2_w",
    "sigma_ffn2_b",
];

/// Adapter weights for channel width `C`.
///
/// Shapes: the four attention projections are `C x C`; the token MLP is
/// `C x 4C` and `4C x C` with matching biases; the variance head is
/// `2C x C` and `C x 1` with matching biases.
#[derive(Debug, Clone)]
pub struct AdapterParams<T> {
    channels: usize,
    init_seed: u64,
    w_q: Tensor<T>,
    w_k: Tensor<T>,
    w_v: Tensor<T>,
    w_o: Tensor<T>,
    ffn1_w: Tensor<T>,
    ffn1_b: Tensor<T>,
    ffn2_w: Tensor<T>,
    ffn2_b: Tensor<T>,
    sigma_ffn1_w: Tensor<T>,
    sigma_ffn1_b: Tensor<T>,
    sigma_ffn2_w: Tensor<T>,
    sigma_ffn2_b: Tensor<T>,
}

/// Contextualized tokens produced by [`encode_tokens`]: a `B x N x C` tensor.
#[derive(Debug, Clone)]
pub struct EncodedTokens<T> {
    tokens: Tensor<T>,
}

impl<T: Scalar> EncodedTokens<T> {
    /// Wrap a `B x N x C` tensor as encoded tokens.
    pub fn from_tensor(tokens: Tensor<T>) -> Result<Self> {
        if tokens.rank() != 3 {
            return Err(Error::shape(
                "adapter.encoded_tokens",
                format!("expected dims [B, N, C], got {:?}", tokens.dims()),
            ));
        }
        Ok(Self { tokens })
    }

    /// Underlying `B x N x C` tensor.
    pub fn tensor(&self) -> &Tensor<T> {
        &self.tokens
    }

    /// Consume into the underlying tensor.
    pub fn into_tensor(self) -> Tensor<T> {
        self.tokens
    }

    /// Batch count `B`.
    pub fn batch_count(&self) -> usize {
        self.tokens.dims()[0]
    }

    /// Tokens per batch `N`.
    pub fn token_count(&self) -> usize {
        self.tokens.dims()[1]
    }

    /// Channel width `C`.
    pub fn channels(&self) -> usize {
        self.tokens.dims()[2]
    }

    /// One batch as an `N x C` matrix.
    pub fn batch(&self, index: usize) -> Result<Tensor<T>> {
        self.tokens.batch(index)
    }
}

impl<T: Scalar> AdapterParams<T> {
    /// Xavier-uniform initialization from a seed.
    ///
    /// Weight matrices are drawn in the order `w_q, w_k, w_v, w_o, ffn1_w,
    /// ffn2_w, sigma_ffn1_w, sigma_ffn2_w`, each row-major, with entries
    /// uniform in `[-a, a]` for `a = sqrt(6 / (fan_in + fan_out))`; biases
    /// are zero. The draw order and generator are fixed, so equal seeds give
    /// bit-identical parameters.
    pub fn init(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::arg(
                "adapter.init_params",
                "channel width must be at least 1".to_string(),
            ));
        }
        let c = channels;
        let hidden = FFN_MULTIPLIER * c;
        let mut rng = SeededRng::new(seed);
        let mut draw = |rows: usize, cols: usize| -> Tensor<T> {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| T::narrow(rng.next_range(-bound, bound)))
                .collect();
            Tensor::from_parts(vec![rows, cols], data)
        };
        let w_q = draw(c, c);
        let w_k = draw(c, c);
        let w_v = draw(c, c);
        let w_o = draw(c, c);
        let ffn1_w = draw(c, hidden);
        let ffn2_w = draw(hidden, c);
        let sigma_ffn1_w = draw(2 * c, c);
        let sigma_ffn2_w = draw(c, 1);
        Ok(Self {
            channels: c,
            init_seed: seed,
            w_q,
            w_k,
            w_v,
            w_o,
            ffn1_w,
            ffn1_b: Tensor::zeros(vec![hidden]),
            ffn2_w,
            ffn2_b: Tensor::zeros(vec![c]),
            sigma_ffn1_w,
            sigma_ffn1_b: Tensor::zeros(vec![c]),
            sigma_ffn2_w,
            sigma_ffn2_b: Tensor::zeros(vec![1]),
        })
    }

    /// Assemble parameters from explicit tensors, validating every shape.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        init_seed: u64,
        w_q: Tensor<T>,
        w_k: Tensor<T>,
        w_v: Tensor<T>,
        w_o: Tensor<T>,
        ffn1_w: Tensor<T>,
        ffn1_b: Tensor<T>,
        ffn2_w: Tensor<T>,
        ffn2_b: Tensor<T>,
        sigma_ffn1_w: Tensor<T>,
        sigma_ffn1_b: Tensor<T>,
        sigma_ffn2_w: Tensor<T>,
        sigma_ffn2_b: Tensor<T>,
    ) -> Result<Self> {
        let [c, c2] = w_q.dims()[..] else {
            return Err(Error::shape(
                "adapter.from_parts",
                format!("w_q must be 2-D, got {:?}", w_q.dims()),
            ));
        };
        if c != c2 || c == 0 {
            return Err(Error::shape(
                "adapter.from_parts",
                format!("w_q must be square and non-empty, got {:?}", w_q.dims()),
            ));
        }
        let hidden = FFN_MULTIPLIER * c;
        let expect = |name: &str, tensor: &Tensor<T>, dims: &[usize]| -> Result<()> {
            if tensor.dims() != dims {
                return Err(Error::shape(
                    "adapter.from_parts",
                    format!("{name} must have dims {:?}, got {:?}", dims, tensor.dims()),
                ));
            }
            Ok(())
        };
        expect("w_k", &w_k, &[c, c])?;
        expect("w_v", &w_v, &[c, c])?;
        expect("w_o", &w_o, &[c, c])?;
        expect("ffn1_w", &ffn1_w, &[c, hidden])?;
        expect("ffn1_b", &ffn1_b, &[hidden])?;
        expect("ffn2_w", &ffn2_w, &[hidden, c])?;
        expect("ffn2_b", &ffn2_b, &[c])?;
        expect("sigma_ffn1_w", &sigma_ffn1_w, &[2 * c, c])?;
        expect("sigma_ffn1_b", &sigma_ffn1_b, &[c])?;
        expect("sigma_ffn2_w", &sigma_ffn2_w, &[c, 1])?;
        expect("sigma_ffn2_b", &sigma_ffn2_b, &[1])?;
        Ok(Self {
            channels: c,
            init_seed,
            w_q,
            w_k,
            w_v,
            w_o,
            ffn1_w,
            ffn1_b,
            ffn2_w,
            ffn2_b,
            sigma_ffn1_w,
            sigma_ffn1_b,
            sigma_ffn2_w,
            sigma_ffn2_b,
        })
    }

    /// Channel width `C`.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Seed the weights were initialized from (0 by convention for
    /// file-loaded parameters).
    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Query projection.
    pub fn w_q(&self) -> &Tensor<T> {
        &self.w_q
    }

    /// Key projection.
    pub fn w_k(&self) -> &Tensor<T> {
        &self.w_k
    }

    /// Value projection.
    pub fn w_v(&self) -> &Tensor<T> {
        &self.w_v
    }

    /// Output projection.
    pub fn w_o(&self) -> &Tensor<T> {
        &self.w_o
    }

    /// Serialize all weights into a single-precision container, entries in
    /// [`PARAM_NAMES`] order. Double-precision weights are rounded to `f32`.
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut file = TensorFile::new();
        let tensors: [(&str, &Tensor<T>); 12] = [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("ffn1_w", &self.ffn1_w),
            ("ffn1_b", &self.ffn1_b),
            ("ffn2_w", &self.ffn2_w),
            ("ffn2_b", &self.ffn2_b),
            ("sigma_ffn1_w", &self.sigma_ffn1_w),
            ("sigma_ffn1_b", &self.sigma_ffn1_b),
            ("sigma_ffn2_w", &self.sigma_ffn2_w),
            ("sigma_ffn2_b", &self.sigma_ffn2_b),
        ];
        for (name, tensor) in tensors {
            file.insert(name, tensor.cast::<f32>())
                .expect("parameter names are unique");
        }
        file
    }

    /// Load parameters from a container holding all [`PARAM_NAMES`] entries.
    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let get = |name: &'static str| -> Result<Tensor<T>> {
            file.get(name)
                .map(Tensor::cast)
                .ok_or_else(|| {
                    Error::arg(
                        "adapter.from_tensor_file",
                        format!("missing parameter entry {name:?}"),
                    )
                })
        };
        Self::from_parts(
            0,
            get("w_q")?,
            get("w_k")?,
            get("w_v")?,
            get("w_o")?,
            get("ffn1_w")?,
            get("ffn1_b")?,
            get("ffn2_w")?,
            get("ffn2_b")?,
            get("sigma_ffn1_w")?,
            get("sigma_ffn1_b")?,
            get("sigma_ffn2_w")?,
            get("sigma_ffn2_b")?,
        )
    }

    /// Apply the residual MLP `z + ffn2(relu(ffn1(z)))` to an `N x C` matrix.
    fn token_mlp(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let hidden = z
            .matmul(&self.ffn1_w)?
            .add_bias_rows(&self.ffn1_b)?
            .relu();
        let out = hidden.matmul(&self.ffn2_w)?.add_bias_rows(&self.ffn2_b)?;
        z.add(&out)
    }

    /// Scaled dot-product attention of `queries` against `keys_values`
    /// (both `.. x C` matrices), returning the attended values before the
    /// output projection.
    fn attend(&self, queries: &Tensor<T>, keys_values: &Tensor<T>) -> Result<Tensor<T>> {
        let q = queries.matmul(&self.w_q)?;
        let k = keys_values.matmul(&self.w_k)?;
        let v = keys_values.matmul(&self.w_v)?;
        let scale = T::narrow(1.0 / (self.channels as f64).sqrt());
        let scores = q.matmul(&k.transpose()?)?.scale(scale);
        let attn = scores.softmax_rows()?;
        attn.matmul(&v)?.matmul(&self.w_o)
    }
}

/// Encode `B x N x C` patch embeddings into contextualized tokens
/// `T = Z + FFN(Z)` with `Z = X + SelfAttention(X)`.
pub fn encode_tokens<T: Scalar>(
    embeddings: &Tensor<T>,
    params: &AdapterParams<T>,
) -> Result<EncodedTokens<T>> {
    let [b, _, c] = embeddings.dims()[..] else {
        return Err(Error::shape(
            "adapter.encode_tokens",
            format!("expected dims [B, N, C], got {:?}", embeddings.dims()),
        ));
    };
    if c != params.channels {
        return Err(Error::shape(
            "adapter.encode_tokens",
            format!(
                "embeddings have {c} channels but parameters expect {}",
                params.channels
            ),
        ));
    }
    let mut batches = Vec::with_capacity(b);
    for bi in 0..b {
        let x = embeddings.batch(bi)?;
        let z = x.add(&params.attend(&x, &x)?)?;
        batches.push(params.token_mlp(&z)?);
    }
    EncodedTokens::from_tensor(Tensor::stack(&batches)?)
}

/// Cross-attend one patch vector (length `C`) against an `N x C` token set,
/// sharing the self-attention projections. Returns the length-`C` context
/// vector; with a single token it reduces to `(f Wv) Wo` exactly.
pub fn cross_attend<T: Scalar>(
    patch: &Tensor<T>,
    tokens: &Tensor<T>,
    params: &AdapterParams<T>,
) -> Result<Tensor<T>> {
    let c = params.channels;
    if patch.dims() != [c] {
        return Err(Error::shape(
            "adapter.cross_attend",
            format!("patch must have dims [{c}], got {:?}", patch.dims()),
        ));
    }
    let [_, c2] = tokens.dims()[..] else {
        return Err(Error::shape(
            "adapter.cross_attend",
            format!("tokens must be 2-D, got {:?}", tokens.dims()),
        ));
    };
    if c2 != c {
        return Err(Error::shape(
            "adapter.cross_attend",
            format!("tokens have {c2} channels but parameters expect {c}"),
        ));
    }
    let query = patch.reshape(vec![1, c])?;
    let context = params.attend(&query, tokens)?;
    context.reshape(vec![c])
}

/// Estimate the radiance variance of one patch from its embedding and
/// cross-attention context: `relu(head(concat(f, c))) + epsilon` with
/// `epsilon = 1e-6`, so the result is strictly positive.
pub fn estimate_variance<T: Scalar>(
    patch: &Tensor<T>,
    context: &Tensor<T>,
    params: &AdapterParams<T>,
) -> Result<T> {
    let c = params.channels;
    if patch.dims() != [c] || context.dims() != [c] {
        return Err(Error::shape(
            "adapter.estimate_variance",
            format!(
                "patch and context must have dims [{c}], got {:?} and {:?}",
                patch.dims(),
                context.dims()
            ),
        ));
    }
    let mut joined = Vec::with_capacity(2 * c);
    joined.extend_from_slice(patch.data());
    joined.extend_from_slice(context.data());
    let h = Tensor::from_parts(vec![1, 2 * c], joined);
    let hidden = h
        .matmul(&params.sigma_ffn1_w)?
        .add_bias_rows(&params.sigma_ffn1_b)?
        .relu();
    let out = hidden
        .matmul(&params.sigma_ffn2_w)?
        .add_bias_rows(&params.sigma_ffn2_b)?;
    let raw = out.data()[0];
    Ok(raw.max(T::zero()) + T::narrow(VARIANCE_EPSILON))
}
