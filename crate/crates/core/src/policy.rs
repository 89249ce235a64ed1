//! Closed-form and Monte-Carlo analysis of uniform random subgraph
//! selection on families of `l` equal-sized disconnected components.
//!
//! Two quantities matter: the probability that `l` uniform draws land in
//! `l` distinct components (`l!/l^l`), and the expected number of draws
//! until every component is hit (`l * H_l`, the coupon-collector bound).
//! The simulations use a seeded ChaCha8 stream so runs reproduce
//! bit-for-bit across platforms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("trial count must be at least 1")]
    ZeroTrials,
}

/// Summary statistics of the random policy on an `l`-component family.
///
/// Each Monte-Carlo estimator fills the field it simulates and carries the
/// closed-form value of the other, so a report always holds both views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    /// Probability that `l` uniform draws cover all `l` components.
    pub success_prob: f64,
    /// Expected number of uniform draws until all components are covered.
    pub expected_draws: f64,
    pub trials: u64,
    /// Standard error of the simulated field.
    pub std_err: f64,
}

/// `l! / l^l`, evaluated in log space to stay finite for large `l`.
pub fn success_probability_exact(l: usize) -> Result<f64, PolicyError> {
    if l == 0 {
        return Err(PolicyError::ZeroComponents);
    }
    let log_ratio: f64 = (1..=l).map(|i| (i as f64).ln()).sum::<f64>() - (l as f64) * (l as f64).ln();
    Ok(log_ratio.exp())
}

/// `l * H_l` where `H_l` is the l-th harmonic number.
pub fn expected_draws_exact(l: usize) -> Result<f64, PolicyError> {
    if l == 0 {
        return Err(PolicyError::ZeroComponents);
    }
    let harmonic: f64 = (1..=l).map(|i| 1.0 / i as f64).sum();
    Ok(l as f64 * harmonic)
}

/// Fraction of trials in which `l` uniform draws over `l * n` nodes land in
/// `l` distinct components, with the binomial standard error.
pub fn success_probability_mc(
    n: usize,
    l: usize,
    trials: u64,
    seed: u64,
) -> Result<PolicyStats, PolicyError> {
    if l == 0 {
        return Err(PolicyError::ZeroComponents);
    }
    if trials == 0 {
        return Err(PolicyError::ZeroTrials);
    }
    let total_nodes = l * n.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u64;
    let mut covered = vec![false; l];
    for _ in 0..trials {
        covered.iter_mut().for_each(|c| *c = false);
        let mut distinct = 0;
        for _ in 0..l {
            let node = rng.random_range(0..total_nodes);
            let component = node / n.max(1);
            if !covered[component] {
                covered[component] = true;
                distinct += 1;
            }
        }
        if distinct == l {
            successes += 1;
        }
    }
    let p = successes as f64 / trials as f64;
    Ok(PolicyStats {
        success_prob: p,
        expected_draws: expected_draws_exact(l)?,
        trials,
        std_err: (p * (1.0 - p) / trials as f64).sqrt(),
    })
}

/// Mean number of uniform draws over `l * n` nodes until every component has
/// been hit at least once, with the standard error of the mean.
pub fn expected_draws_mc(
    n: usize,
    l: usize,
    trials: u64,
    seed: u64,
) -> Result<PolicyStats, PolicyError> {
    if l == 0 {
        return Err(PolicyError::ZeroComponents);
    }
    if trials == 0 {
        return Err(PolicyError::ZeroTrials);
    }
    let total_nodes = l * n.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut covered = vec![false; l];
    for _ in 0..trials {
        covered.iter_mut().for_each(|c| *c = false);
        let mut remaining = l;
        let mut draws = 0u64;
        while remaining > 0 {
            let node = rng.random_range(0..total_nodes);
            let component = node / n.max(1);
            draws += 1;
            if !covered[component] {
                covered[component] = true;
                remaining -= 1;
            }
        }
        let d = draws as f64;
        sum += d;
        sum_sq += d * d;
    }
    let t = trials as f64;
    let mean = sum / t;
    let variance = (sum_sq / t - mean * mean).max(0.0);
    Ok(PolicyStats {
        success_prob: success_probability_exact(l)?,
        expected_draws: mean,
        trials,
        std_err: (variance / t).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_success_probability_small_cases() {
        assert_eq!(success_probability_exact(1).unwrap(), 1.0);
        assert!((success_probability_exact(2).unwrap() - 0.5).abs() < 1e-12);
        assert!((success_probability_exact(3).unwrap() - 6.0 / 27.0).abs() < 1e-12);
        assert_eq!(success_probability_exact(0).unwrap_err(), PolicyError::ZeroComponents);
    }

    #[test]
    fn exact_success_probability_is_decreasing_and_vanishing() {
        let mut previous = success_probability_exact(2).unwrap();
        for l in 3..=50 {
            let current = success_probability_exact(l).unwrap();
            assert!(current < previous, "l = {l}");
            previous = current;
        }
        assert!(previous < 1e-18);
    }

    #[test]
    fn exact_expected_draws_small_cases() {
        assert_eq!(expected_draws_exact(1).unwrap(), 1.0);
        assert!((expected_draws_exact(2).unwrap() - 3.0).abs() < 1e-12);
        assert!((expected_draws_exact(3).unwrap() - 5.5).abs() < 1e-12);
        // l * H_l for l = 100 is about 518.74, noticeably above the
        // l * ln(l) ~ 460.5 asymptotic shortcut.
        let exact = expected_draws_exact(100).unwrap();
        assert!((exact - 518.737_751_763_962).abs() < 1e-9);
        assert!(exact > 100.0 * (100.0f64).ln());
    }

    #[test]
    fn simulated_success_probability_tracks_exact() {
        for l in [1usize, 2, 3, 5, 10] {
            let exact = success_probability_exact(l).unwrap();
            let stats = success_probability_mc(13, l, 100_000, 7).unwrap();
            let tolerance = 3.0 * (exact * (1.0 - exact) / 100_000.0).sqrt();
            assert!(
                (stats.success_prob - exact).abs() <= tolerance,
                "l = {l}: {} vs {exact}",
                stats.success_prob
            );
            assert!(stats.std_err >= 0.0);
        }
    }

    #[test]
    fn single_component_is_always_covered() {
        let stats = success_probability_mc(13, 1, 1_000, 3).unwrap();
        assert_eq!(stats.success_prob, 1.0);
        let draws = expected_draws_mc(13, 1, 1_000, 3).unwrap();
        assert_eq!(draws.expected_draws, 1.0);
        assert_eq!(draws.std_err, 0.0);
    }

    #[test]
    fn simulated_draws_track_coupon_collector() {
        for l in [2usize, 3, 10] {
            let exact = expected_draws_exact(l).unwrap();
            let stats = expected_draws_mc(13, l, 100_000, 11).unwrap();
            assert!(
                (stats.expected_draws - exact).abs() <= 3.0 * stats.std_err,
                "l = {l}: {} vs {exact} (3se = {})",
                stats.expected_draws,
                3.0 * stats.std_err
            );
        }
    }

    #[test]
    fn draw_count_is_independent_of_component_size() {
        let exact = expected_draws_exact(3).unwrap();
        for n in [7usize, 13, 19] {
            let stats = expected_draws_mc(n, 3, 50_000, 21).unwrap();
            assert!(
                (stats.expected_draws - exact).abs() <= 3.0 * stats.std_err,
                "n = {n}"
            );
        }
    }

    #[test]
    fn simulations_are_deterministic_per_seed() {
        let a = success_probability_mc(13, 3, 10_000, 5).unwrap();
        let b = success_probability_mc(13, 3, 10_000, 5).unwrap();
        assert_eq!(a, b);
        let c = expected_draws_mc(13, 3, 10_000, 5).unwrap();
        let d = expected_draws_mc(13, 3, 10_000, 5).unwrap();
        assert_eq!(c, d);
    }
}
