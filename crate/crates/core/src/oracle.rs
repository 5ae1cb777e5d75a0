//! Closed-form expectations that simulated statistics are checked against.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("optimal hash count is undefined for an empty filter (N = 0)")]
    DivisionByZero,
    #[error("{0} must be at least 1")]
    ZeroArgument(&'static str),
}

/// Expected number of uniform draws needed to see all `n` values: n·H(n).
pub fn coupon_collector(n: u32) -> Result<f64, OracleError> {
    if n == 0 {
        return Err(OracleError::ZeroArgument("n"));
    }
    let harmonic: f64 = (1..=n).map(|i| 1.0 / f64::from(i)).sum();
    Ok(f64::from(n) * harmonic)
}

/// Expected fraction of redundant slots when `k` slots each independently
/// hold one of `n` equally likely IDs.
pub fn duplicate_fraction(n: u32, k: u32) -> Result<f64, OracleError> {
    if n == 0 {
        return Err(OracleError::ZeroArgument("n"));
    }
    if k == 0 {
        return Err(OracleError::ZeroArgument("k"));
    }
    let (n, k) = (f64::from(n), f64::from(k));
    let expected_distinct = n * (1.0 - (1.0 - 1.0 / n).powf(k));
    Ok((k - expected_distinct) / k)
}

/// Probability that a fresh key finds all `m` of its cells occupied after
/// `n` insertions into `k` cells: (1 − e^(−mN/K))^m.
pub fn bf_false_positive_rate(k: u64, n: u64, m: u32) -> Result<f64, OracleError> {
    if k == 0 {
        return Err(OracleError::ZeroArgument("K"));
    }
    let m_f = f64::from(m);
    Ok((1.0 - (-m_f * n as f64 / k as f64).exp()).powf(m_f))
}

/// Hash-function count minimising the false-positive rate: (ln 2)·K/N.
pub fn bf_optimal_hash_count(k: u64, n: u64) -> Result<f64, OracleError> {
    if n == 0 {
        return Err(OracleError::DivisionByZero);
    }
    Ok(std::f64::consts::LN_2 * k as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupon_collector_values() {
        assert_eq!(coupon_collector(1).unwrap(), 1.0);
        let five = 5.0 * (1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2);
        assert!((coupon_collector(5).unwrap() - five).abs() < 1e-12);
        assert!((coupon_collector(5).unwrap() - 11.4167).abs() < 1e-4);
        assert!((coupon_collector(10).unwrap() - 29.2897).abs() < 1e-4);
    }

    #[test]
    fn duplicate_fraction_values() {
        assert!(duplicate_fraction(10, 1).unwrap().abs() < 1e-12);
        assert!((duplicate_fraction(10, 2).unwrap() - 0.05).abs() < 1e-12);
        assert!((duplicate_fraction(10, 5).unwrap() - 0.181).abs() < 5e-4);
    }

    #[test]
    fn duplicate_fraction_matches_enumeration() {
        // Exhaustive over all 10^3 slot assignments for n = 10, k = 3.
        let n = 10u32;
        let mut redundant = 0u32;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut v = vec![a, b, c];
                    v.sort_unstable();
                    v.dedup();
                    redundant += 3 - v.len() as u32;
                }
            }
        }
        let exact = f64::from(redundant) / (3.0 * 1000.0);
        assert!((duplicate_fraction(10, 3).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn bloom_oracle_values() {
        assert_eq!(bf_false_positive_rate(1024, 0, 1).unwrap(), 0.0);
        let full = bf_false_positive_rate(100, 100, 1).unwrap();
        assert!((full - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((full - 0.632).abs() < 1e-3);
        assert!((bf_optimal_hash_count(10, 1).unwrap() - 6.93).abs() < 5e-3);
        assert_eq!(bf_optimal_hash_count(10, 0), Err(OracleError::DivisionByZero));
    }
}
