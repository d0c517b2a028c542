//! Confidence bounds for Monte Carlo frequencies.

use serde::{Deserialize, Serialize};

/// How an interval around an empirical frequency was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceMethod {
    /// Distribution-free one-sided Hoeffding bound.
    Hoeffding,
    /// Normal approximation, `p̂ ± z·se`.
    StandardError,
}

/// `sqrt(ln(1/δ) / (2n))`: one-sided Hoeffding radius for a mean of `n`
/// variables in `[0,1]` at failure probability `delta`.
pub fn hoeffding_radius(n: u64, delta: f64) -> f64 {
    assert!(n > 0, "empty sample");
    assert!(delta > 0.0 && delta < 1.0, "delta must be in (0,1)");
    ((1.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Lower confidence bound for a Bernoulli frequency, clamped to `[0,1]`.
pub fn hoeffding_lower(successes: u64, n: u64, confidence: f64) -> f64 {
    let p = successes as f64 / n as f64;
    (p - hoeffding_radius(n, 1.0 - confidence)).max(0.0)
}

pub fn hoeffding_upper(successes: u64, n: u64, confidence: f64) -> f64 {
    let p = successes as f64 / n as f64;
    (p + hoeffding_radius(n, 1.0 - confidence)).min(1.0)
}

/// Standard error of a Bernoulli frequency.
pub fn frequency_se(successes: u64, n: u64) -> f64 {
    let p = successes as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Largest of the observed standard error and the one implied by `p`.
///
/// Comparisons against an exact value `p` use this so that a degenerate
/// sample (all or none) is not held to a zero-width band.
pub fn frequency_se_against(successes: u64, n: u64, p: f64) -> f64 {
    let exact = (p * (1.0 - p) / n as f64).sqrt();
    frequency_se(successes, n).max(exact)
}
