use std::collections::HashMap;

use super::{MetricsError, TokenSequence};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total for one order.
///
/// Each candidate n-gram count is clipped to the largest count of that
/// n-gram in any single reference.
pub fn clipped_matches(candidate: &TokenSequence, references: &[TokenSequence], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate.tokens(), n);
    let total = candidate.len().saturating_sub(n - 1);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (gram, c) in ngram_counts(r.tokens(), n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let matched = cand
        .iter()
        .map(|(gram, c)| (*c).min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Reference length closest to `candidate_len`; ties go to the shorter reference.
pub fn closest_reference_length(candidate_len: usize, references: &[TokenSequence]) -> usize {
    references
        .iter()
        .map(TokenSequence::len)
        .min_by_key(|&r| (r.abs_diff(candidate_len), r))
        .unwrap_or(0)
}

/// `exp(1 - r/c)` when the candidate is shorter than the reference, else 1.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len < reference_len {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    }
}

/// Sentence-level cumulative BLEU up to order `max_n` with uniform weights.
///
/// Orders two and above with zero matches use add-one smoothing,
/// `(0 + 1) / (total + 1)`. An empty candidate scores 0.
pub fn bleu(candidate: &TokenSequence, references: &[TokenSequence], max_n: usize) -> Result<f64, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    if max_n == 0 {
        return Err(MetricsError::InvalidOrder(max_n));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(candidate, references, n);
        let p = if n == 1 {
            if matched == 0 {
                return Ok(0.0);
            }
            matched as f64 / total as f64
        } else if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = brevity_penalty(candidate.len(), closest_reference_length(candidate.len(), references));
    Ok(bp * (log_sum / max_n as f64).exp())
}
