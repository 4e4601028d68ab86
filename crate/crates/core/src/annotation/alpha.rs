//! Krippendorff's alpha for nominal labels.

use std::collections::BTreeMap;

use super::AnnotationError;

/// Alpha from each unit's list of assigned labels.
///
/// Builds the coincidence matrix, where every ordered pair of values within
/// a unit of `m` values adds `1 / (m - 1)`, and returns `1 - D_o / D_e`.
/// Units with fewer than two values are not pairable and are skipped; at
/// least two pairable units and two distinct labels are required.
pub fn krippendorff_alpha_units<T: Ord + Clone>(units: &[Vec<T>]) -> Result<f64, AnnotationError> {
    let mut coincidence: BTreeMap<(T, T), f64> = BTreeMap::new();
    let mut pairable_units = 0;
    for values in units.iter().filter(|v| v.len() >= 2) {
        pairable_units += 1;
        let weight = 1.0 / (values.len() - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a.clone(), b.clone())).or_insert(0.0) += weight;
                }
            }
        }
    }
    if pairable_units < 2 {
        return Err(AnnotationError::UndefinedAgreement("fewer than two units have two or more judgments"));
    }
    let mut marginals: BTreeMap<T, f64> = BTreeMap::new();
    for ((c, _), o) in &coincidence {
        *marginals.entry(c.clone()).or_insert(0.0) += o;
    }
    if marginals.len() < 2 {
        return Err(AnnotationError::UndefinedAgreement("only one label value occurs"));
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, o)| o).sum();
    let total_sq: f64 = marginals.values().map(|x| x * x).sum();
    let expected = n * n - total_sq;
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Alpha over an item × annotator matrix; `None` marks a missing judgment.
pub fn krippendorff_alpha<T: Ord + Clone>(matrix: &[Vec<Option<T>>]) -> Result<f64, AnnotationError> {
    let units: Vec<Vec<T>> = matrix.iter().map(|row| row.iter().flatten().cloned().collect()).collect();
    krippendorff_alpha_units(&units)
}
