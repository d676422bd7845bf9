//! Concentration-bound checks.
//!
//! [`hoeffding_bound`] evaluates the two-sided Hoeffding tail
//! `2 exp(-2 N eps^2)` for means of `N` i.i.d. samples bounded in `[0, 1]`;
//! the value is returned raw and may exceed 1 for small `N * eps^2`, where
//! the bound is vacuous. [`monte_carlo_violation`] estimates the actual
//! violation frequency empirically so the bound can be checked numerically:
//! the frequency must stay within the bound plus three binomial standard
//! errors of the trial count ([`binomial_slack`]).
//!
//! [`lemma1_deviation`] evaluates the importance-score deviation bound
//! `(1/tau) sqrt(log(2/delta) / (2N)) + beta L / tau` for a
//! temperature-`tau` scoring rule under a `beta`-weighted `L`-Lipschitz
//! mask perturbation, holding with probability at least `1 - delta`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Parameters of the deviation bound.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    temperature: f64,
    mask_weight: f64,
    lipschitz: f64,
    confidence: f64,
    batch_size: usize,
}

impl BoundParams {
    /// Validated constructor: `temperature > 0`, `mask_weight >= 0`,
    /// `lipschitz >= 0`, `confidence` in `(0, 1]`, `batch_size >= 1`.
    pub fn new(
        temperature: f64,
        mask_weight: f64,
        lipschitz: f64,
        confidence: f64,
        batch_size: usize,
    ) -> Result<Self> {
        let op = "theory.bound_params";
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::arg(
                op,
                format!("temperature must be positive, got {temperature}"),
            ));
        }
        if !(mask_weight.is_finite() && mask_weight >= 0.0) {
            return Err(Error::arg(
                op,
                format!("mask weight must be non-negative, got {mask_weight}"),
            ));
        }
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::arg(
                op,
                format!("Lipschitz constant must be non-negative, got {lipschitz}"),
            ));
        }
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(Error::arg(
                op,
                format!("confidence level must lie in (0, 1], got {confidence}"),
            ));
        }
        if batch_size == 0 {
            return Err(Error::arg(op, "batch size must be at least 1".to_string()));
        }
        Ok(Self {
            temperature,
            mask_weight,
            lipschitz,
            confidence,
            batch_size,
        })
    }

    /// Temperature tau.
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Mask perturbation weight beta.
    pub fn mask_weight(&self) -> f64 {
        self.mask_weight
    }

    /// Lipschitz constant L.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Failure probability delta.
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Sample count N.
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

/// Two-sided Hoeffding tail `2 exp(-2 N eps^2)` for `[0, 1]`-bounded
/// samples. Returned raw: values above 1 mean the bound is vacuous.
pub fn hoeffding_bound(sample_count: usize, epsilon: f64) -> f64 {
    2.0 * (-2.0 * sample_count as f64 * epsilon * epsilon).exp()
}

/// Deviation bound `(1/tau) sqrt(log(2/delta) / (2N)) + beta L / tau`.
pub fn lemma1_deviation(params: &BoundParams) -> f64 {
    let concentration = ((2.0 / params.confidence).ln()
        / (2.0 * params.batch_size as f64))
        .sqrt()
        / params.temperature;
    concentration + params.mask_weight * params.lipschitz / params.temperature
}

/// Distribution the Monte Carlo trials draw from; both have mean 1/2 and
/// live in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleModel {
    /// `Uniform[0, 1)` draws.
    Uniform,
    /// Fair coin flips.
    Bernoulli,
}

/// Empirical frequency, over `trials` batches of `sample_count` draws, of
/// the event `|mean - 1/2| >= epsilon`. Deterministic per seeded generator;
/// shard across substreams for parallel runs.
pub fn monte_carlo_violation(
    sample_count: usize,
    epsilon: f64,
    trials: usize,
    model: SampleModel,
    rng: &mut SeededRng,
) -> Result<f64> {
    let op = "theory.monte_carlo_violation";
    if sample_count == 0 {
        return Err(Error::arg(op, "sample count must be at least 1".to_string()));
    }
    if trials == 0 {
        return Err(Error::arg(op, "trial count must be at least 1".to_string()));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::arg(
            op,
            format!("epsilon must be non-negative, got {epsilon}"),
        ));
    }
    let mut violations = 0usize;
    for _ in 0..trials {
        let mut total = 0.0f64;
        match model {
            SampleModel::Uniform => {
                for _ in 0..sample_count {
                    total += rng.next_f64();
                }
            }
            SampleModel::Bernoulli => {
                for _ in 0..sample_count {
                    total += f64::from(rng.next_bit());
                }
            }
        }
        let mean = total / sample_count as f64;
        if (mean - 0.5).abs() >= epsilon {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}

/// Three binomial standard errors around a success probability capped at 1:
/// the statistical slack an empirical frequency over `trials` draws is
/// allowed on top of its bound.
pub fn binomial_slack(bound: f64, trials: usize) -> f64 {
    let p = bound.min(1.0);
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_at_zero_epsilon_is_two() {
        assert_eq!(hoeffding_bound(100, 0.0), 2.0);
    }

    #[test]
    fn bound_matches_closed_form_value() {
        // 2 exp(-2 * 100 * 0.04) = 2 exp(-8) ~= 6.7093e-4.
        let bound = hoeffding_bound(100, 0.2);
        let expected = 2.0 * (-8.0f64).exp();
        assert!((bound - expected).abs() < 1e-18);
        assert!((bound - 6.7093e-4).abs() < 1e-8);
    }

    #[test]
    fn bound_decreases_with_more_samples() {
        let mut last = f64::INFINITY;
        for n in [10, 50, 100, 500, 1000] {
            let bound = hoeffding_bound(n, 0.1);
            assert!(bound < last);
            last = bound;
        }
    }

    #[test]
    fn deviation_matches_hand_computed_case() {
        // tau = 1, beta = 0, delta = 2/e, N = 50:
        // log(2 / (2/e)) = 1, sqrt(1 / 100) = 0.1.
        let params = BoundParams::new(1.0, 0.0, 0.0, 2.0 / std::f64::consts::E, 50).unwrap();
        assert!((lemma1_deviation(&params) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deviation_halves_when_temperature_doubles() {
        let base = BoundParams::new(1.0, 0.3, 2.0, 0.1, 40).unwrap();
        let cooler = BoundParams::new(2.0, 0.3, 2.0, 0.1, 40).unwrap();
        let ratio = lemma1_deviation(&cooler) / lemma1_deviation(&base);
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deviation_adds_the_perturbation_term() {
        let clean = BoundParams::new(1.0, 0.0, 5.0, 0.05, 30).unwrap();
        let perturbed = BoundParams::new(1.0, 0.2, 5.0, 0.05, 30).unwrap();
        let gap = lemma1_deviation(&perturbed) - lemma1_deviation(&clean);
        assert!((gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_validate_their_domains() {
        assert!(BoundParams::new(0.0, 0.0, 0.0, 0.5, 10).is_err());
        assert!(BoundParams::new(1.0, -0.1, 0.0, 0.5, 10).is_err());
        assert!(BoundParams::new(1.0, 0.0, -1.0, 0.5, 10).is_err());
        assert!(BoundParams::new(1.0, 0.0, 0.0, 0.0, 10).is_err());
        assert!(BoundParams::new(1.0, 0.0, 0.0, 1.5, 10).is_err());
        assert!(BoundParams::new(1.0, 0.0, 0.0, 0.5, 0).is_err());
    }

    #[test]
    fn impossible_deviation_never_fires() {
        // |mean - 1/2| <= 1/2 < 1 always, so the frequency is exactly 0.
        let mut rng = SeededRng::new(1);
        let freq =
            monte_carlo_violation(20, 1.0, 200, SampleModel::Uniform, &mut rng).unwrap();
        assert_eq!(freq, 0.0);
    }

    #[test]
    fn violation_frequency_is_deterministic_per_seed() {
        let mut a = SeededRng::new(321);
        let mut b = SeededRng::new(321);
        let fa = monte_carlo_violation(50, 0.05, 500, SampleModel::Bernoulli, &mut a).unwrap();
        let fb = monte_carlo_violation(50, 0.05, 500, SampleModel::Bernoulli, &mut b).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn frequency_respects_the_bound_on_the_reference_case() {
        let (n, eps, trials) = (100, 0.2, 10_000);
        let mut rng = SeededRng::new(7);
        let freq =
            monte_carlo_violation(n, eps, trials, SampleModel::Bernoulli, &mut rng).unwrap();
        let bound = hoeffding_bound(n, eps);
        assert!(
            freq <= bound + binomial_slack(bound, trials),
            "frequency {freq} exceeds bound {bound} plus slack"
        );
    }

    #[test]
    fn zero_trials_are_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(monte_carlo_violation(10, 0.1, 0, SampleModel::Uniform, &mut rng).is_err());
    }

    #[test]
    fn slack_caps_vacuous_bounds() {
        // bound > 1 would make p (1 - p) negative without the cap.
        let slack = binomial_slack(1.8, 100);
        assert_eq!(slack, 0.0);
    }
}
