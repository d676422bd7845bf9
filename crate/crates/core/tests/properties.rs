//! Randomized invariants that must hold across the documented input domains
//! of every module: numeric kernel contracts, mask budgets and ranges,
//! schedule monotonicity, bound monotonicity, and container round-trips.

use amaze_core::importance::ImportancePrior;
use amaze_core::io::tensor_file::TensorFile;
use amaze_core::mask::rfgam::{
    intensity_field, rfgam_mask, thresholds, RadiationPoint, RadiationPointSet, MIN_VARIANCE,
};
use amaze_core::mask::threshold::{threshold_mask, ThresholdMaskConfig};
use amaze_core::schedule::{k_at_epoch, rho_at_epoch};
use amaze_core::theory::{lemma1_deviation, BoundParams};
use amaze_core::{Tensor32, Tensor64};
use proptest::prelude::*;

/// A rank-2 tensor with the given bounds, dimensions drawn in `1..dim_max`.
fn matrix(dim_max: usize, low: f64, high: f64) -> impl Strategy<Value = Tensor64> {
    (1..dim_max, 1..dim_max).prop_flat_map(move |(rows, cols)| {
        prop::collection::vec(low..high, rows * cols)
            .prop_map(move |data| Tensor64::from_vec(vec![rows, cols], data).unwrap())
    })
}

/// `round(x)` with ties away from zero for non-negative `x`; the budget rule.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_within_domain(m in matrix(7, -80.0, 80.0)) {
        let soft = m.softmax_rows().unwrap();
        for r in 0..m.dims()[0] {
            let row = soft.row(r).unwrap();
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row {r} sums to {sum}");
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn minmax_outputs_stay_in_unit_interval(
        data in prop::collection::vec(-1e6f64..1e6, 1..100),
    ) {
        let dims = vec![data.len()];
        let out = Tensor64::from_vec(dims, data).unwrap().minmax_normalize().unwrap();
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn minmax_maps_degenerate_inputs_to_half(
        value in -1e6f64..1e6,
        len in 1usize..50,
    ) {
        let out = Tensor64::filled(vec![len], value).minmax_normalize().unwrap();
        prop_assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5).prop_flat_map(
            |(m, k, n, p)| {
                let entry = -2.0f64..2.0;
                (
                    prop::collection::vec(entry.clone(), m * k)
                        .prop_map(move |d| Tensor64::from_vec(vec![m, k], d).unwrap()),
                    prop::collection::vec(entry.clone(), k * n)
                        .prop_map(move |d| Tensor64::from_vec(vec![k, n], d).unwrap()),
                    prop::collection::vec(entry, n * p)
                        .prop_map(move |d| Tensor64::from_vec(vec![n, p], d).unwrap()),
                )
            },
        ),
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            prop_assert!(
                (l - r).abs() <= 1e-4 * (1.0 + l.abs().max(r.abs())),
                "associativity violated: {l} vs {r}"
            );
        }
    }

    #[test]
    fn threshold_mask_is_binary_with_exact_budget(
        (batches, tokens, scores) in (1usize..4, 4usize..48).prop_flat_map(|(b, n)| {
            (Just(b), Just(n), prop::collection::vec(0.0f64..=1.0, b * n))
        }),
        mask_ratio in 0.0f64..=1.0,
        important_fraction in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let prior = ImportancePrior::from_scores(
            Tensor64::from_vec(vec![batches, tokens], scores).unwrap(),
        )
        .unwrap();
        let mask = threshold_mask(
            &prior,
            &ThresholdMaskConfig { mask_ratio, important_fraction, seed },
        )
        .unwrap();
        prop_assert!(mask.is_binary());
        let budget = round_half_up(mask_ratio * tokens as f64);
        for (batch, zeros) in mask.zero_counts().into_iter().enumerate() {
            prop_assert_eq!(zeros, budget, "batch {} masked {} of {}", batch, zeros, budget);
        }
    }

    #[test]
    fn rfgam_mask_lies_in_unit_interval_and_is_monotone(
        points in prop::collection::vec(
            (0.01f64..0.99, 0.01f64..0.99, 0.0f64..=1.0, MIN_VARIANCE..0.5),
            1..6,
        ),
        height in 2usize..8,
        width in 2usize..8,
        window in 0.0f64..1.0,
    ) {
        let points = RadiationPointSet::new(vec![points
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, amplitude, variance))| {
                RadiationPoint::new(i, (x, y), amplitude, variance).unwrap()
            })
            .collect()])
        .unwrap();
        let field = intensity_field::<f64>(&points, height, width).unwrap();
        let stats = field.stats(0);
        let (t_hard, t_no_mask) = thresholds(stats.mean, stats.std_dev, 1.0, window);
        let mask = rfgam_mask(&field, t_hard, t_no_mask).unwrap();
        let weights = mask.batch_values(0).unwrap();
        prop_assert!(weights.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let grid = field.batch_grid(0);
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                if grid[i] > grid[j] {
                    prop_assert!(
                        weights[i] <= weights[j],
                        "intensity {} > {} but weight {} > {}",
                        grid[i], grid[j], weights[i], weights[j]
                    );
                }
            }
        }
    }

    #[test]
    fn schedule_window_never_increases_and_ratio_never_decreases(
        initial_window in 0.0f64..1.0,
        target in 0.0f64..=1.0,
        warmup_fraction in 0.01f64..=1.0,
        total_epochs in 1usize..20,
        epoch in 0usize..25,
    ) {
        let here = k_at_epoch(initial_window, epoch, total_epochs).unwrap();
        let next = k_at_epoch(initial_window, epoch + 1, total_epochs).unwrap();
        prop_assert!(next <= here, "k grew from {here} to {next} at epoch {epoch}");
        let rho_here = rho_at_epoch(target, epoch, total_epochs, warmup_fraction);
        let rho_next = rho_at_epoch(target, epoch + 1, total_epochs, warmup_fraction);
        prop_assert!(rho_next >= rho_here, "rho shrank from {rho_here} to {rho_next}");
        prop_assert!((0.0..=target.max(0.0)).contains(&rho_here));
    }

    #[test]
    fn deviation_bound_shrinks_with_batch_and_temperature(
        temperature in 0.5f64..4.0,
        mask_weight in 0.0f64..1.0,
        lipschitz in 0.0f64..4.0,
        confidence in 0.01f64..0.5,
        batch_size in 1usize..1000,
    ) {
        let base = BoundParams::new(temperature, mask_weight, lipschitz, confidence, batch_size)
            .unwrap();
        let bigger_batch =
            BoundParams::new(temperature, mask_weight, lipschitz, confidence, batch_size * 2)
                .unwrap();
        let hotter =
            BoundParams::new(temperature * 2.0, mask_weight, lipschitz, confidence, batch_size)
                .unwrap();
        let reference = lemma1_deviation(&base);
        prop_assert!(lemma1_deviation(&bigger_batch) <= reference);
        prop_assert!(lemma1_deviation(&hotter) <= reference);
    }

    #[test]
    fn container_round_trip_is_bit_exact(
        tensors in prop::collection::vec(
            (1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(a, b, c)| {
                prop::collection::vec(
                    any::<f32>().prop_filter("finite", |v| v.is_finite()),
                    a * b * c,
                )
                .prop_map(move |data| Tensor32::from_vec(vec![a, b, c], data).unwrap())
            }),
            1..4,
        ),
    ) {
        let mut file = TensorFile::new();
        for (i, tensor) in tensors.iter().enumerate() {
            file.insert(format!("t{i}"), tensor.clone()).unwrap();
        }
        let bytes = file.to_bytes();
        let reread = TensorFile::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(reread.to_bytes(), bytes);
        for (i, tensor) in tensors.iter().enumerate() {
            let back = reread.get(&format!("t{i}")).unwrap();
            prop_assert_eq!(back.dims(), tensor.dims());
            let same_bits = back
                .data()
                .iter()
                .zip(tensor.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits, "entry t{i} changed bits across the round trip");
        }
    }
}
