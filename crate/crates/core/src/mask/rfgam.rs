//! Gaussian radiance-field masking (RF-GAM).
//!
//! The top-K patches by importance become radiation points. Point `k` sits
//! at the normalized center of its patch, radiates with amplitude `alpha_k`
//! (its importance score) and variance `sigma_k^2` (from the adapter's
//! variance head), and the intensity at a grid position is the sum of
//! Gaussian contributions:
//!
//! ```text
//! I(x, y) = sum_k alpha_k * exp(-((x - x_k)^2 + (y - y_k)^2) / (2 sigma_k^2))
//! ```
//!
//! The field is evaluated at every patch center. From its per-batch mean and
//! population standard deviation, two thresholds bracket a soft band:
//! `T_hard = mu + (delta + k) sigma` and `T_no_mask = mu + (delta - k) sigma`.
//! Intensities above `T_hard` mask fully (weight 0), below `T_no_mask` stay
//! (weight 1), and the band in between interpolates linearly. A zero-width
//! band degrades to the binary rule `weight = 0 iff I >= T_hard`.
//!
//! All field math runs in `f64` and is deterministic; masking strength is
//! steered externally through `k` (see the schedule module).

use crate::adapter::{cross_attend, estimate_variance, AdapterParams, EncodedTokens};
use crate::error::{Error, Result};
use crate::importance::ImportancePrior;
use crate::mask::MaskMatrix;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, DEGENERATE_RANGE};

/// Smallest admissible radiance variance: the variance head's floor (1e-6)
/// as rounded into single precision, the loosest storage the engine
/// supports. Double-precision variances always clear it.
pub const MIN_VARIANCE: f64 = 1e-6_f32 as f64;

/// One Gaussian radiator.
#[derive(Debug, Clone, Copy)]
pub struct RadiationPoint {
    index: usize,
    center: (f64, f64),
    amplitude: f64,
    variance: f64,
}

impl RadiationPoint {
    /// Validated constructor. Centers must lie strictly inside the unit
    /// square, variances at or above the head's floor, and amplitudes must
    /// be finite and non-negative (points built by [`select_radiation_points`]
    /// additionally keep amplitudes within `[0, 1]`, but rescaled fields are
    /// allowed to exceed that).
    pub fn new(index: usize, center: (f64, f64), amplitude: f64, variance: f64) -> Result<Self> {
        let op = "mask.radiation_point";
        if !(center.0 > 0.0 && center.0 < 1.0 && center.1 > 0.0 && center.1 < 1.0) {
            return Err(Error::arg(
                op,
                format!("center {center:?} must lie strictly inside the unit square"),
            ));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::arg(
                op,
                format!("amplitude {amplitude} must be finite and non-negative"),
            ));
        }
        if !(variance.is_finite() && variance >= MIN_VARIANCE) {
            return Err(Error::arg(
                op,
                format!("variance {variance} must be at least {MIN_VARIANCE}"),
            ));
        }
        Ok(Self {
            index,
            center,
            amplitude,
            variance,
        })
    }

    /// Patch index this point was selected from.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Normalized `(x, y)` center, both in `(0, 1)`.
    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    /// Radiation amplitude.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Radiance variance.
    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Per-batch radiation points.
#[derive(Debug, Clone)]
pub struct RadiationPointSet {
    batches: Vec<Vec<RadiationPoint>>,
}

impl RadiationPointSet {
    /// Wrap per-batch point lists; every batch must hold at least one point.
    pub fn new(batches: Vec<Vec<RadiationPoint>>) -> Result<Self> {
        if batches.is_empty() || batches.iter().any(Vec::is_empty) {
            return Err(Error::arg(
                "mask.radiation_point_set",
                "every batch needs at least one radiation point".to_string(),
            ));
        }
        Ok(Self { batches })
    }

    /// Batch count.
    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// Points of one batch.
    pub fn batch_points(&self, index: usize) -> &[RadiationPoint] {
        &self.batches[index]
    }

    /// Same points with every amplitude multiplied by `factor > 0`; the
    /// induced intensity field scales by exactly the same factor.
    pub fn scale_amplitudes(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::arg(
                "mask.scale_amplitudes",
                format!("factor {factor} must be finite and positive"),
            ));
        }
        let batches = self
            .batches
            .iter()
            .map(|points| {
                points
                    .iter()
                    .map(|p| {
                        RadiationPoint::new(p.index, p.center, p.amplitude * factor, p.variance)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(batches)
    }
}

/// Mean and population standard deviation of one batch's intensity grid.
#[derive(Debug, Clone, Copy)]
pub struct FieldStats {
    /// Empirical mean mu.
    pub mean: f64,
    /// Population standard deviation sigma_stat.
    pub std_dev: f64,
}

/// Radiance intensities evaluated at every patch center: a `B x H x W`
/// non-negative grid plus per-batch statistics.
#[derive(Debug, Clone)]
pub struct IntensityField<T> {
    grid: Tensor<T>,
    stats: Vec<FieldStats>,
}

impl<T: Scalar> IntensityField<T> {
    /// Wrap a `B x H x W` grid, computing per-batch statistics.
    pub fn from_grid(grid: Tensor<T>) -> Result<Self> {
        let [b, h, w] = grid.dims()[..] else {
            return Err(Error::shape(
                "mask.intensity_field",
                format!("expected dims [B, H, W], got {:?}", grid.dims()),
            ));
        };
        if h * w == 0 {
            return Err(Error::arg(
                "mask.intensity_field",
                format!("grid {h}x{w} has no cells"),
            ));
        }
        if let Some(bad) = grid.data().iter().find(|v| **v < T::zero()) {
            return Err(Error::arg(
                "mask.intensity_field",
                format!("intensity {bad} must be non-negative"),
            ));
        }
        let n = h * w;
        let stats = (0..b)
            .map(|bi| {
                let cells = &grid.data()[bi * n..(bi + 1) * n];
                let mean = cells.iter().map(|v| v.wide()).sum::<f64>() / n as f64;
                let var = cells
                    .iter()
                    .map(|v| {
                        let d = v.wide() - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n as f64;
                FieldStats {
                    mean,
                    std_dev: var.sqrt(),
                }
            })
            .collect();
        Ok(Self { grid, stats })
    }

    /// Underlying `B x H x W` grid.
    pub fn grid(&self) -> &Tensor<T> {
        &self.grid
    }

    /// Grid of one batch as a flat row-major slice.
    pub fn batch_grid(&self, index: usize) -> &[T] {
        let n = self.height() * self.width();
        &self.grid.data()[index * n..(index + 1) * n]
    }

    /// Statistics of one batch.
    pub fn stats(&self, index: usize) -> FieldStats {
        self.stats[index]
    }

    /// Batch count `B`.
    pub fn batch_count(&self) -> usize {
        self.grid.dims()[0]
    }

    /// Grid height `H`.
    pub fn height(&self) -> usize {
        self.grid.dims()[1]
    }

    /// Grid width `W`.
    pub fn width(&self) -> usize {
        self.grid.dims()[2]
    }
}

/// Normalized center of patch `j` on an `H x W` grid:
/// `((j % W + 0.5) / W, (j / W + 0.5) / H)`.
fn patch_center(index: usize, height: usize, width: usize) -> (f64, f64) {
    (
        ((index % width) as f64 + 0.5) / width as f64,
        ((index / width) as f64 + 0.5) / height as f64,
    )
}

/// Select the top `point_count` patches per batch as radiation points.
/// Amplitudes are the normalized importance scores, variances come from the
/// adapter's variance head over the patch token and its cross-attention
/// context. Ties in score break toward the lower patch index.
pub fn select_radiation_points<T: Scalar>(
    prior: &ImportancePrior<T>,
    tokens: &EncodedTokens<T>,
    params: &AdapterParams<T>,
    height: usize,
    width: usize,
    point_count: usize,
) -> Result<RadiationPointSet> {
    let op = "mask.select_radiation_points";
    let b = prior.batch_count();
    let n = prior.token_count();
    if tokens.batch_count() != b || tokens.token_count() != n {
        return Err(Error::shape(
            op,
            format!(
                "prior is {b}x{n} but tokens are {}x{}",
                tokens.batch_count(),
                tokens.token_count()
            ),
        ));
    }
    if height * width != n {
        return Err(Error::shape(
            op,
            format!("{height}x{width} grid does not hold {n} patches"),
        ));
    }
    if point_count == 0 || point_count > n {
        return Err(Error::arg(
            op,
            format!("point count {point_count} must lie in [1, {n}]"),
        ));
    }
    let mut batches = Vec::with_capacity(b);
    for bi in 0..b {
        let scores = prior.batch_scores(bi)?;
        let batch_tokens = tokens.batch(bi)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| {
            scores[c]
                .partial_cmp(&scores[a])
                .expect("scores are finite")
                .then(a.cmp(&c))
        });
        let mut points = Vec::with_capacity(point_count);
        for &j in &order[..point_count] {
            let patch = Tensor::from_parts(vec![batch_tokens.dims()[1]], batch_tokens.row(j)?.to_vec());
            let context = cross_attend(&patch, &batch_tokens, params)?;
            let variance = estimate_variance(&patch, &context, params)?.wide();
            points.push(RadiationPoint::new(
                j,
                patch_center(j, height, width),
                scores[j].wide(),
                variance,
            )?);
        }
        batches.push(points);
    }
    RadiationPointSet::new(batches)
}

/// Evaluate the radiance field of every batch at all `H x W` patch centers.
/// Per-cell sums accumulate in `f64` before rounding into storage precision.
pub fn intensity_field<T: Scalar>(
    points: &RadiationPointSet,
    height: usize,
    width: usize,
) -> Result<IntensityField<T>> {
    if height * width == 0 {
        return Err(Error::arg(
            "mask.intensity_field",
            format!("grid {height}x{width} has no cells"),
        ));
    }
    let b = points.batch_count();
    let n = height * width;
    let mut grid = vec![T::zero(); b * n];
    for bi in 0..b {
        let batch_points = points.batch_points(bi);
        for j in 0..n {
            let (x, y) = patch_center(j, height, width);
            let mut total = 0.0f64;
            for point in batch_points {
                let (px, py) = point.center();
                let dx = x - px;
                let dy = y - py;
                total += point.amplitude()
                    * (-(dx * dx + dy * dy) / (2.0 * point.variance())).exp();
            }
            grid[bi * n + j] = T::narrow(total);
        }
    }
    IntensityField::from_grid(Tensor::from_parts(vec![b, height, width], grid))
}

/// Hard and no-mask thresholds from field statistics:
/// `(mu + (delta + k) sigma, mu + (delta - k) sigma)`. For `k >= 0` the
/// hard threshold never falls below the no-mask threshold.
pub fn thresholds(mean: f64, std_dev: f64, offset: f64, window: f64) -> (f64, f64) {
    (
        mean + (offset + window) * std_dev,
        mean + (offset - window) * std_dev,
    )
}

/// Keep-weight of one intensity under a threshold pair.
fn cell_weight(intensity: f64, t_hard: f64, t_no_mask: f64) -> f64 {
    let band = t_hard - t_no_mask;
    if band < DEGENERATE_RANGE {
        // Degenerate band: binary rule.
        if intensity >= t_hard {
            0.0
        } else {
            1.0
        }
    } else if intensity > t_hard {
        0.0
    } else if intensity < t_no_mask {
        1.0
    } else {
        1.0 - (intensity - t_no_mask) / band
    }
}

/// Soft mask from an intensity field under one threshold pair applied to
/// every batch. Weights are 0 above `t_hard`, 1 below `t_no_mask`, and
/// interpolate linearly in between; the mask rows follow the grid row-major,
/// so mask column `h * W + w` covers grid cell `(h, w)`.
pub fn rfgam_mask<T: Scalar>(
    field: &IntensityField<T>,
    t_hard: f64,
    t_no_mask: f64,
) -> Result<MaskMatrix<T>> {
    if !(t_hard.is_finite() && t_no_mask.is_finite()) || t_hard < t_no_mask {
        return Err(Error::arg(
            "mask.rfgam_mask",
            format!("thresholds must be finite with t_hard >= t_no_mask, got ({t_hard}, {t_no_mask})"),
        ));
    }
    let b = field.batch_count();
    let n = field.height() * field.width();
    let mut values = vec![T::zero(); b * n];
    for bi in 0..b {
        for (j, cell) in field.batch_grid(bi).iter().enumerate() {
            values[bi * n + j] = T::narrow(cell_weight(cell.wide(), t_hard, t_no_mask));
        }
    }
    MaskMatrix::new(Tensor::from_parts(vec![b, n], values))
}

/// Soft mask with per-batch thresholds derived from each batch's own field
/// statistics — the composition the pipeline runs.
pub fn rfgam_mask_per_batch<T: Scalar>(
    field: &IntensityField<T>,
    offset: f64,
    window: f64,
) -> Result<MaskMatrix<T>> {
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::arg(
            "mask.rfgam_mask",
            format!("window half-width {window} must be non-negative"),
        ));
    }
    let b = field.batch_count();
    let n = field.height() * field.width();
    let mut values = vec![T::zero(); b * n];
    for bi in 0..b {
        let stats = field.stats(bi);
        let (t_hard, t_no_mask) = thresholds(stats.mean, stats.std_dev, offset, window);
        for (j, cell) in field.batch_grid(bi).iter().enumerate() {
            values[bi * n + j] = T::narrow(cell_weight(cell.wide(), t_hard, t_no_mask));
        }
    }
    MaskMatrix::new(Tensor::from_parts(vec![b, n], values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn point(center: (f64, f64), amplitude: f64, variance: f64) -> RadiationPoint {
        RadiationPoint::new(0, center, amplitude, variance).unwrap()
    }

    fn field_from(values: Vec<f64>, h: usize, w: usize) -> IntensityField<f64> {
        IntensityField::from_grid(Tensor::from_vec(vec![1, h, w], values).unwrap()).unwrap()
    }

    #[test]
    fn single_point_radiates_its_amplitude_at_its_center() {
        let points =
            RadiationPointSet::new(vec![vec![point((0.25, 0.25), 0.8, 0.05)]]).unwrap();
        let field: IntensityField<f64> = intensity_field(&points, 2, 2).unwrap();
        // Cell (0, 0) center is exactly the point center: I = alpha.
        assert_eq!(field.batch_grid(0)[0], 0.8);
    }

    #[test]
    fn tiny_variance_decays_to_zero_off_center() {
        let points =
            RadiationPointSet::new(vec![vec![point((0.25, 0.25), 1.0, MIN_VARIANCE)]]).unwrap();
        let field: IntensityField<f64> = intensity_field(&points, 2, 2).unwrap();
        // Off-center cells sit at distance >= 0.5 in one coordinate:
        // exp(-0.25 / 2e-6) underflows to zero.
        assert_eq!(field.batch_grid(0)[1], 0.0);
        assert_eq!(field.batch_grid(0)[3], 0.0);
    }

    #[test]
    fn two_point_field_matches_hand_derivation() {
        let points = RadiationPointSet::new(vec![vec![
            point((0.25, 0.25), 0.8, 0.05),
            point((0.75, 0.75), 0.5, 0.2),
        ]])
        .unwrap();
        let field: IntensityField<f64> = intensity_field(&points, 2, 2).unwrap();
        // Cell (0, 0): first point at distance 0, second at squared distance
        // 0.5^2 + 0.5^2 = 0.5.
        let expected = 0.8 + 0.5 * (-0.5 / 0.4f64).exp();
        assert!((field.batch_grid(0)[0] - expected).abs() < 1e-12);
        // Cell (1, 1): symmetric roles.
        let expected = 0.5 + 0.8 * (-0.5 / 0.1f64).exp();
        assert!((field.batch_grid(0)[3] - expected).abs() < 1e-12);
    }

    #[test]
    fn field_matches_brute_force_double_loop() {
        let mut rng = SeededRng::new(88);
        let (h, w) = (5, 7);
        let points: Vec<RadiationPoint> = (0..6)
            .map(|i| {
                let j = rng.next_index(h * w);
                RadiationPoint::new(
                    i,
                    (
                        ((j % w) as f64 + 0.5) / w as f64,
                        ((j / w) as f64 + 0.5) / h as f64,
                    ),
                    rng.next_f64(),
                    rng.next_range(1e-4, 0.5),
                )
                .unwrap()
            })
            .collect();
        let set = RadiationPointSet::new(vec![points.clone()]).unwrap();
        let field: IntensityField<f64> = intensity_field(&set, h, w).unwrap();
        // Oracle: accumulate point-major instead of cell-major.
        let mut oracle = vec![0.0f64; h * w];
        for p in &points {
            for (j, cell) in oracle.iter_mut().enumerate() {
                let x = ((j % w) as f64 + 0.5) / w as f64;
                let y = ((j / w) as f64 + 0.5) / h as f64;
                let d2 = (x - p.center().0).powi(2) + (y - p.center().1).powi(2);
                *cell += p.amplitude() * (-d2 / (2.0 * p.variance())).exp();
            }
        }
        for (j, (&got, want)) in field.batch_grid(0).iter().zip(&oracle).enumerate() {
            assert!((got - want).abs() < 1e-10, "cell {j}: {got} vs {want}");
        }
    }

    #[test]
    fn stats_match_empirical_moments() {
        let values = vec![1.0, 2.0, 3.0, 4.0];
        let field = field_from(values.clone(), 2, 2);
        let stats = field.stats(0);
        assert!((stats.mean - 2.5).abs() < 1e-12);
        let var = values.iter().map(|v| (v - 2.5).powi(2)).sum::<f64>() / 4.0;
        assert!((stats.std_dev - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn thresholds_follow_the_affine_form() {
        let (hard, no_mask) = thresholds(1.0, 0.5, 0.0, 1.0);
        assert_eq!((hard, no_mask), (1.5, 0.5));
        let (hard, no_mask) = thresholds(2.0, 0.25, 1.0, 0.5);
        assert!((hard - 2.375).abs() < 1e-15);
        assert!((no_mask - 2.125).abs() < 1e-15);
    }

    #[test]
    fn zero_window_collapses_the_band() {
        let (hard, no_mask) = thresholds(3.0, 0.7, 1.2, 0.0);
        assert_eq!(hard, no_mask);
    }

    #[test]
    fn mask_interpolates_between_thresholds() {
        let field = field_from(vec![0.0, 1.0, 0.5, 2.0], 2, 2);
        let mask = rfgam_mask(&field, 1.0, 0.0).unwrap();
        let values = mask.batch_values(0).unwrap();
        assert_eq!(values[0], 1.0); // at t_no_mask
        assert_eq!(values[1], 0.0); // at t_hard
        assert_eq!(values[2], 0.5); // midpoint
        assert_eq!(values[3], 0.0); // above t_hard
    }

    #[test]
    fn degenerate_band_is_binary_at_the_threshold() {
        let field = field_from(vec![0.0, 1.0, 0.5, 2.0], 2, 2);
        let mask = rfgam_mask(&field, 1.0, 1.0).unwrap();
        assert_eq!(mask.batch_values(0).unwrap(), &[1.0, 0.0, 1.0, 0.0]);
        assert!(mask.is_binary());
    }

    #[test]
    fn constant_field_masks_everything_under_auto_thresholds() {
        // sigma_stat = 0 makes both thresholds equal the mean; the binary
        // rule then masks every cell (I >= t_hard).
        let field = field_from(vec![0.7; 4], 2, 2);
        let mask = rfgam_mask_per_batch(&field, 1.0, 0.5).unwrap();
        assert!(mask.batch_values(0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverted_thresholds_are_rejected() {
        let field = field_from(vec![0.0, 1.0, 0.5, 2.0], 2, 2);
        assert!(rfgam_mask(&field, 0.5, 1.0).is_err());
    }

    #[test]
    fn mask_is_monotone_in_intensity() {
        let mut rng = SeededRng::new(13);
        let values: Vec<f64> = (0..36).map(|_| rng.next_f64() * 3.0).collect();
        let field = field_from(values.clone(), 6, 6);
        let mask = rfgam_mask_per_batch(&field, 0.5, 0.8).unwrap();
        let weights = mask.batch_values(0).unwrap();
        let mut order: Vec<usize> = (0..36).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        for pair in order.windows(2) {
            assert!(
                weights[pair[0]] >= weights[pair[1]],
                "weight must not increase with intensity"
            );
        }
    }

    #[test]
    fn select_rejects_out_of_range_point_counts() {
        let params = AdapterParams::<f64>::init(2, 1).unwrap();
        let tokens = EncodedTokens::from_tensor(Tensor::from_vec(
            vec![1, 4, 2],
            (0..8).map(|i| i as f64 / 8.0).collect(),
        )
        .unwrap())
        .unwrap();
        let prior = crate::importance::importance_prior(&tokens).unwrap();
        assert!(select_radiation_points(&prior, &tokens, &params, 2, 2, 5).is_err());
        assert!(select_radiation_points(&prior, &tokens, &params, 2, 2, 0).is_err());
    }

    #[test]
    fn select_takes_the_argmax_first_and_breaks_ties_low() {
        let params = AdapterParams::<f64>::init(2, 2).unwrap();
        let tokens = EncodedTokens::from_tensor(Tensor::from_vec(
            vec![1, 4, 2],
            vec![0.1, 0.2, 0.1, 0.2, 4.0, 4.0, 4.0, 4.0],
        )
        .unwrap())
        .unwrap();
        // Tokens 2 and 3 are identical and dominant: scores tie at 1.0.
        let prior = crate::importance::importance_prior(&tokens).unwrap();
        let set = select_radiation_points(&prior, &tokens, &params, 2, 2, 2).unwrap();
        let indices: Vec<usize> = set.batch_points(0).iter().map(|p| p.index()).collect();
        assert_eq!(indices, vec![2, 3]);
    }

    #[test]
    fn selected_centers_follow_the_grid_formula() {
        let params = AdapterParams::<f64>::init(2, 3).unwrap();
        let tokens = EncodedTokens::from_tensor(Tensor::from_vec(
            vec![1, 6, 2],
            (0..12).map(|i| (i % 5) as f64).collect(),
        )
        .unwrap())
        .unwrap();
        let prior = crate::importance::importance_prior(&tokens).unwrap();
        let set = select_radiation_points(&prior, &tokens, &params, 2, 3, 6).unwrap();
        for p in set.batch_points(0) {
            let j = p.index();
            let expected = (
                ((j % 3) as f64 + 0.5) / 3.0,
                ((j / 3) as f64 + 0.5) / 2.0,
            );
            assert_eq!(p.center(), expected, "patch {j}");
        }
    }

    #[test]
    fn amplitude_scaling_scales_the_field_linearly() {
        let points = RadiationPointSet::new(vec![vec![
            point((0.25, 0.75), 0.6, 0.03),
            point((0.75, 0.25), 0.9, 0.4),
        ]])
        .unwrap();
        let field: IntensityField<f64> = intensity_field(&points, 4, 4).unwrap();
        let scaled: IntensityField<f64> =
            intensity_field(&points.scale_amplitudes(2.5).unwrap(), 4, 4).unwrap();
        for (a, b) in field.batch_grid(0).iter().zip(scaled.batch_grid(0)) {
            if *a > 0.0 {
                assert!((b / a - 2.5).abs() < 1e-9, "{b} vs 2.5 * {a}");
            }
        }
    }
}
