//! Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricsError;

/// Largest number of non-zero differences handled by the exact null distribution.
pub const EXACT_LIMIT: usize = 20;

/// Fewest pairs accepted by [`wilcoxon_signed_rank`]. Below five pairs no
/// outcome reaches a two-sided p of 0.05.
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`, doubled so ties stay integral.
pub fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share the rank (start+1+end)/2
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Non-zero differences with their doubled absolute ranks.
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<u64>), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    if a.is_empty() {
        return Err(MetricsError::TooFewPairs(0));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(MetricsError::AllZeroDifferences);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    Ok((diffs, ranks))
}

/// Number of sign assignments reaching each doubled rank sum.
fn null_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn exact_p(doubled_ranks: &[u64], observed: u64) -> f64 {
    let counts = null_counts(doubled_ranks);
    let all = (1u64 << doubled_ranks.len()) as f64;
    let lower: u64 = counts[..=observed as usize].iter().sum();
    let upper: u64 = counts[observed as usize..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

fn normal_p(doubled_ranks: &[u64], w_plus: f64) -> f64 {
    let n = doubled_ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = doubled_ranks.to_vec();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_plus - mean) / var.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided signed-rank test of `scores_a - scores_b`.
///
/// Zero differences are dropped and tied magnitudes get midranks. Up to
/// [`EXACT_LIMIT`] pairs the p-value comes from the exact permutation
/// distribution, `2 * min(P(W <= w), P(W >= w))`; beyond that a normal
/// approximation with tie-corrected variance and no continuity correction.
pub fn wilcoxon_signed_rank(scores_a: &[f64], scores_b: &[f64]) -> Result<WilcoxonResult, MetricsError> {
    if scores_a.len() == scores_b.len() && scores_a.len() < MIN_PAIRS {
        return Err(MetricsError::TooFewPairs(scores_a.len()));
    }
    signed_rank_test(scores_a, scores_b)
}

/// [`wilcoxon_signed_rank`] without the minimum sample size.
pub fn signed_rank_test(scores_a: &[f64], scores_b: &[f64]) -> Result<WilcoxonResult, MetricsError> {
    let (diffs, ranks) = signed_ranks(scores_a, scores_b)?;
    let observed: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
    let w_plus = observed as f64 / 2.0;
    let n = diffs.len();
    let exact = n <= EXACT_LIMIT;
    let p_value = if exact { exact_p(&ranks, observed) } else { normal_p(&ranks, w_plus) };
    Ok(WilcoxonResult { w_plus, n, p_value, exact })
}

/// Brute-force p-value over all `2^n` sign assignments. Used as a test oracle.
pub fn brute_force_p(scores_a: &[f64], scores_b: &[f64]) -> Result<f64, MetricsError> {
    let (diffs, ranks) = signed_ranks(scores_a, scores_b)?;
    let n = diffs.len();
    if n > EXACT_LIMIT {
        return Err(MetricsError::TooManyPairs(n));
    }
    let observed: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| *r).sum();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        lower += u64::from(w <= observed);
        upper += u64::from(w >= observed);
    }
    Ok((2.0 * lower.min(upper) as f64 / (1u64 << n) as f64).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_positive_differences() {
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.w_plus, 15.0);
        assert!(r.exact);
    }

    #[test]
    fn midranks_for_ties() {
        assert_eq!(doubled_midranks(&[1.0, 2.0, 2.0, 3.0]), vec![2, 5, 5, 8]);
    }

    #[test]
    fn zero_differences_are_dropped() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 5.0, 3.0, 3.0], &[1.0, 1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(r.p_value, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 5], &[1.0; 5]), Err(MetricsError::AllZeroDifferences)));
        assert!(matches!(
            wilcoxon_signed_rank(&[f64::NAN, 1.0, 2.0, 3.0, 4.0], &[1.0; 5]),
            Err(MetricsError::NonFinite)
        ));
        assert!(matches!(wilcoxon_signed_rank(&[2.0; 4], &[1.0; 4]), Err(MetricsError::TooFewPairs(4))));
        assert_eq!(signed_rank_test(&[2.0], &[1.0]).unwrap().p_value, 1.0);
    }

    #[test]
    fn exact_matches_brute_force_with_ties() {
        let a = [1.0, 2.5, 3.0, 0.5, 4.0, 2.0, 1.0];
        let b = [0.0, 1.5, 4.0, 0.5, 2.0, 3.0, 2.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.p_value, brute_force_p(&a, &b).unwrap());
    }

    #[test]
    fn mirrored_differences_give_p_one() {
        let a = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        let r = wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn normal_approximation_for_large_samples() {
        let a: Vec<f64> = (0..40).map(|i| i as f64 + if i % 3 == 0 { -2.5 } else { 1.0 }).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
        let same = wilcoxon_signed_rank(&b.iter().map(|x| x + 1.0).collect::<Vec<_>>(), &b).unwrap();
        assert!(same.p_value < 1e-6);
    }
}
