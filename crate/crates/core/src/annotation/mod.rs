//! Human plausibility judgments: batching, collection, agreement and reporting.

mod alpha;
mod server;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Enthymeme, TestSet};
use crate::generator::GenerationRecord;
use crate::metrics::System;

pub use alpha::{krippendorff_alpha, krippendorff_alpha_units};
pub use server::{router, serve, ItemView, Progress, PORT_ENV};
pub use store::{AnnotationStore, Submission};

pub const DEFAULT_REQUIRED_JUDGES: u32 = 3;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("sample of {requested} exceeds the {available} items available for {dataset}")]
    SampleTooLarge { dataset: TestSet, requested: usize, available: usize },
    #[error("enthymeme id {0} appears in more than one test set")]
    AmbiguousId(String),
    #[error("required_judges must be odd and at least 1, got {0}")]
    InvalidJudgeCount(u32),
    #[error("majority vote needs an odd, non-zero number of judgments, got {0}")]
    EvenVote(usize),
    #[error("agreement is undefined: {0}")]
    UndefinedAgreement(&'static str),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("annotator {annotator} was never served item {item}")]
    NotServed { item: String, annotator: String },
    #[error("annotator {annotator} already judged item {item} differently")]
    Conflict { item: String, annotator: String },
    #[error("item {0} already has all its judgments")]
    ItemFull(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("item {item} has {found} of {required} judgments")]
    Incomplete { item: String, found: usize, required: u32 },
    #[error("duplicate item {0} in batch")]
    DuplicateItem(String),
    #[error("journal {path}:{line}: {message}")]
    Journal { path: String, line: usize, message: String },
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One candidate premise to be judged by several annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub item_id: String,
    pub enthymeme_id: String,
    pub stated_premise: String,
    pub stated_claim: String,
    pub candidate_premise: String,
    pub system: System,
    pub dataset: TestSet,
    #[serde(default = "default_required_judges")]
    pub required_judges: u32,
}

fn default_required_judges() -> u32 {
    DEFAULT_REQUIRED_JUDGES
}

impl AnnotationItem {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.required_judges == 0 || self.required_judges.is_multiple_of(2) {
            return Err(AnnotationError::InvalidJudgeCount(self.required_judges));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub plausible: bool,
    pub submitted_at: DateTime<Utc>,
}

/// Opaque id, so annotators cannot read the system or test set from it.
fn item_id(dataset: TestSet, system: System, enthymeme_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(dataset, system, enthymeme_id)).expect("tuple serializes"));
    hex::encode(&h.finalize()[..8])
}

/// Samples `sample_size` enthymemes per test set and makes one item per
/// system output for each of them, sorted by item id.
///
/// Only enthymemes with a successful generation from every system present
/// for their test set are eligible. Enthymeme ids must be unique across
/// test sets so that generations can be matched to them.
pub fn create_batch(
    generations: &[GenerationRecord],
    enthymemes: &[Enthymeme],
    sample_size: usize,
    seed: u64,
) -> Result<Vec<AnnotationItem>, AnnotationError> {
    let mut by_id: BTreeMap<&str, &Enthymeme> = BTreeMap::new();
    for e in enthymemes {
        if by_id.insert(e.id.as_str(), e).is_some() {
            return Err(AnnotationError::AmbiguousId(e.id.clone()));
        }
    }
    // dataset -> system -> enthymeme id -> premise
    let mut outputs: BTreeMap<TestSet, BTreeMap<System, BTreeMap<&str, &str>>> = BTreeMap::new();
    for g in generations.iter().filter_map(GenerationRecord::premise) {
        if let Some(e) = by_id.get(g.enthymeme_id.as_str()) {
            outputs
                .entry(e.source)
                .or_default()
                .entry(g.setting.into())
                .or_default()
                .insert(e.id.as_str(), g.implicit_premise.as_str());
        }
    }
    let mut items = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (dataset, systems) in &outputs {
        let mut eligible: Vec<&str> = systems.values().next().map(|m| m.keys().copied().collect()).unwrap_or_default();
        eligible.retain(|id| systems.values().all(|m| m.contains_key(id)));
        if sample_size > eligible.len() {
            return Err(AnnotationError::SampleTooLarge {
                dataset: *dataset,
                requested: sample_size,
                available: eligible.len(),
            });
        }
        let chosen: BTreeSet<&str> = eligible.choose_multiple(&mut rng, sample_size).copied().collect();
        for (system, premises) in systems {
            for id in &chosen {
                let e = by_id[id];
                items.push(AnnotationItem {
                    item_id: item_id(*dataset, *system, id),
                    enthymeme_id: e.id.clone(),
                    stated_premise: e.stated_premise.clone(),
                    stated_claim: e.stated_claim.clone(),
                    candidate_premise: premises[id].to_string(),
                    system: *system,
                    dataset: *dataset,
                    required_judges: DEFAULT_REQUIRED_JUDGES,
                });
            }
        }
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(items)
}

/// True iff a strict majority of an odd number of judgments is true.
pub fn majority_vote(judgments: &[bool]) -> Result<bool, AnnotationError> {
    if judgments.len().is_multiple_of(2) {
        return Err(AnnotationError::EvenVote(judgments.len()));
    }
    Ok(judgments.iter().filter(|j| **j).count() * 2 > judgments.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub dataset: TestSet,
    pub system: System,
    pub plausible_fraction: f64,
    /// Agreement within this group; `None` when only one label occurs.
    pub alpha: Option<f64>,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub groups: Vec<GroupReport>,
    /// Agreement over every judgment in the batch.
    pub alpha: Option<f64>,
    pub n_judgments: usize,
    /// Items still short of their required judgments; excluded from the fractions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incomplete_items: Vec<String>,
}

fn alpha_or_none(units: &[Vec<bool>]) -> Option<f64> {
    krippendorff_alpha_units(units).ok()
}

type GroupTally = (usize, usize, Vec<Vec<bool>>);

fn build_report(
    batch: &[AnnotationItem],
    judgments: &[JudgmentRecord],
    strict: bool,
) -> Result<AggregateReport, AnnotationError> {
    let mut labels: BTreeMap<&str, Vec<bool>> = batch.iter().map(|i| (i.item_id.as_str(), Vec::new())).collect();
    for j in judgments {
        labels
            .get_mut(j.item_id.as_str())
            .ok_or_else(|| AnnotationError::UnknownItem(j.item_id.clone()))?
            .push(j.plausible);
    }
    let mut incomplete_items = Vec::new();
    // (items, plausible items, label units) per test set and system
    let mut groups: BTreeMap<(TestSet, System), GroupTally> = BTreeMap::new();
    for item in batch {
        let votes = &labels[item.item_id.as_str()];
        let group = groups.entry((item.dataset, item.system)).or_default();
        group.2.push(votes.clone());
        if votes.len() < item.required_judges as usize {
            if strict {
                return Err(AnnotationError::Incomplete {
                    item: item.item_id.clone(),
                    found: votes.len(),
                    required: item.required_judges,
                });
            }
            incomplete_items.push(item.item_id.clone());
            continue;
        }
        group.0 += 1;
        group.1 += usize::from(majority_vote(votes)?);
    }
    let all_units: Vec<Vec<bool>> = labels.into_values().collect();
    Ok(AggregateReport {
        groups: groups
            .into_iter()
            .filter(|(_, (n, _, _))| *n > 0)
            .map(|((dataset, system), (n, plausible, units))| GroupReport {
                dataset,
                system,
                plausible_fraction: plausible as f64 / n as f64,
                alpha: alpha_or_none(&units),
                n_items: n,
            })
            .collect(),
        alpha: alpha_or_none(&all_units),
        n_judgments: judgments.len(),
        incomplete_items,
    })
}

/// Majority-vote plausibility per (test set, system) and agreement.
/// Every item needs all of its judgments.
pub fn aggregate(batch: &[AnnotationItem], judgments: &[JudgmentRecord]) -> Result<AggregateReport, AnnotationError> {
    build_report(batch, judgments, true)
}

/// Like [`aggregate`], but items still collecting judgments are listed
/// instead of rejected.
pub fn aggregate_partial(
    batch: &[AnnotationItem],
    judgments: &[JudgmentRecord],
) -> Result<AggregateReport, AnnotationError> {
    build_report(batch, judgments, false)
}

/// Plain-text table: one row per test set and system.
pub fn render_report_table(report: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<4}  {:<16}  {:>12}  {:>5}  {:>6}", "Data", "System", "Plausibility", "n", "alpha");
    let _ = writeln!(out, "{}", "-".repeat(4 + 2 + 16 + 2 + 12 + 2 + 5 + 2 + 6));
    for g in &report.groups {
        let alpha = g.alpha.map_or_else(|| "-".to_string(), |a| format!("{a:.2}"));
        let _ = writeln!(
            out,
            "{:<4}  {:<16}  {:>11.0}%  {:>5}  {:>6}",
            g.dataset.to_string(),
            g.system.label(),
            100.0 * g.plausible_fraction,
            g.n_items,
            alpha
        );
    }
    let overall = report.alpha.map_or_else(|| "undefined".to_string(), |a| format!("{a:.2}"));
    let _ = writeln!(out, "judgments: {}  overall alpha: {overall}", report.n_judgments);
    if !report.incomplete_items.is_empty() {
        let _ = writeln!(out, "incomplete items: {}", report.incomplete_items.len());
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::generator::{GeneratedPremise, Setting};

    pub(crate) fn enthymeme(id: &str, source: TestSet) -> Enthymeme {
        Enthymeme {
            id: id.into(),
            stated_premise: format!("Premise {id} holds."),
            stated_claim: format!("Claim {id} follows."),
            gold_premises: vec!["Gold.".into()],
            source,
            scheme: None,
            raw_meta: Default::default(),
            knowledge_phrase: None,
        }
    }

    pub(crate) fn generation(id: &str, setting: Setting) -> GenerationRecord {
        GenerationRecord::Generated(GeneratedPremise {
            enthymeme_id: id.into(),
            setting,
            full_argument: String::new(),
            implicit_premise: format!("Bridge for {id}."),
            extraction_fallback: false,
        })
    }

    fn corpus() -> (Vec<Enthymeme>, Vec<GenerationRecord>) {
        let mut es = Vec::new();
        let mut gs = Vec::new();
        for (set, prefix) in [(TestSet::D1, "a"), (TestSet::D2, "b"), (TestSet::D3, "c")] {
            for i in 0..60 {
                let id = format!("{prefix}{i}");
                es.push(enthymeme(&id, set));
                gs.push(generation(&id, Setting::FineTuned));
                gs.push(generation(&id, Setting::FineTunedKnowledge));
            }
        }
        (es, gs)
    }

    #[test]
    fn fifty_per_test_set() {
        let (es, gs) = corpus();
        let only_art: Vec<_> = gs.iter().filter(|g| g.setting() == Setting::FineTuned).cloned().collect();
        assert_eq!(create_batch(&only_art, &es, 50, 13).unwrap().len(), 150);
        let both = create_batch(&gs, &es, 50, 13).unwrap();
        assert_eq!(both.len(), 300);
        assert!(both.windows(2).all(|w| w[0].item_id < w[1].item_id));
    }

    #[test]
    fn batches_are_seeded() {
        let (es, gs) = corpus();
        assert_eq!(create_batch(&gs, &es, 5, 1).unwrap(), create_batch(&gs, &es, 5, 1).unwrap());
        assert_ne!(create_batch(&gs, &es, 5, 1).unwrap(), create_batch(&gs, &es, 5, 2).unwrap());
        assert!(create_batch(&gs, &es, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn oversized_sample_is_rejected() {
        let (es, gs) = corpus();
        assert!(matches!(create_batch(&gs, &es, 61, 1), Err(AnnotationError::SampleTooLarge { .. })));
    }

    #[test]
    fn majority_examples() {
        assert!(majority_vote(&[true, true, false]).unwrap());
        assert!(!majority_vote(&[false, false, false]).unwrap());
        assert!(!majority_vote(&[true, false, false]).unwrap());
        assert!(majority_vote(&[true, false]).is_err());
    }

    fn judged(item: &str, annotator: &str, plausible: bool) -> JudgmentRecord {
        JudgmentRecord {
            item_id: item.into(),
            annotator_id: annotator.into(),
            plausible,
            submitted_at: DateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn aggregate_counts_majorities() {
        let (es, gs) = corpus();
        let batch = create_batch(&gs[..4], &es, 2, 0).unwrap();
        assert_eq!(batch.len(), 4);
        let mut js = Vec::new();
        for (k, item) in batch.iter().enumerate() {
            for a in 0..3 {
                js.push(judged(&item.item_id, &format!("w{a}"), a < 2 || k == 0));
            }
        }
        let report = aggregate(&batch, &js).unwrap();
        assert_eq!(report.groups.len(), 2);
        assert!(report.groups.iter().all(|g| g.plausible_fraction == 1.0));
        assert!(aggregate(&batch, &js[..11]).is_err());
        let partial = aggregate_partial(&batch, &js[..11]).unwrap();
        assert_eq!(partial.incomplete_items.len(), 1);
        assert!(render_report_table(&report).contains("100%"));
    }
}
