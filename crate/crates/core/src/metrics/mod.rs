//! Automatic evaluation of generated premises against gold premises.
//!
//! Scores are sentence-level and averaged over the corpus. BLEU clips
//! against all gold premises of an item; BERTScore keeps the best F1 over
//! them.

pub mod bertscore;
pub mod bleu;
pub mod wilcoxon;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Enthymeme, TestSet};
use crate::generator::{GenerationRecord, Setting};

pub use bertscore::{bertscore, bertscore_f1, BertScore, Embedder, HttpEmbedder, StaticEmbedder, TableEmbedder};
pub use bleu::bleu;
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no reference sequences")]
    NoReferences,
    #[error("BLEU order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("paired samples differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("too few pairs for a signed-rank test: {0}")]
    TooFewPairs(usize),
    #[error("too many pairs for exact enumeration: {0}")]
    TooManyPairs(usize),
    #[error("all paired differences are zero; the statistic is undefined")]
    AllZeroDifferences,
    #[error("non-finite score")]
    NonFinite,
    #[error("generations and enthymemes are misaligned; missing: {missing:?}; unexpected: {unexpected:?}")]
    Misaligned { missing: Vec<String>, unexpected: Vec<String> },
    #[error("duplicate generation for {0}")]
    DuplicateGeneration(String),
    #[error("generations mix settings {0} and {1}")]
    MixedSystems(Setting, Setting),
    #[error("enthymemes mix test sets {0} and {1}")]
    MixedDatasets(TestSet, TestSet),
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
    #[error("enthymeme {0} has no usable gold premise")]
    NoGold(String),
    #[error("compared evaluations differ: {0}")]
    Incomparable(String),
    #[error("embedder failure: {0}")]
    Embedder(String),
}

/// Lowercased tokens produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_detachable(c: char) -> bool {
    c.is_ascii_punctuation() && !matches!(c, '$' | '%' | '&' | '#' | '@' | '/' | '-' | '+' | '=')
        || matches!(c, '“' | '”' | '‘' | '’' | '…' | '«' | '»')
}

/// Lowercases, splits on whitespace and detaches leading and trailing
/// punctuation, one token per mark. Inner punctuation (`obama's`, `e.g`)
/// and currency or percent signs stay attached.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let chars: Vec<char> = word.chars().collect();
        let lead = chars.iter().take_while(|c| is_detachable(**c)).count();
        if lead == chars.len() {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        }
        let trail = chars.iter().rev().take_while(|c| is_detachable(**c)).count();
        out.extend(chars[..lead].iter().map(|c| c.to_string()));
        out.push(chars[lead..chars.len() - trail].iter().collect());
        out.extend(chars[chars.len() - trail..].iter().map(|c| c.to_string()));
    }
    TokenSequence(out)
}

/// Table row label: which trained system produced the premises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    ZeroShot,
    Art,
    ArtParacomet,
}

impl From<Setting> for System {
    fn from(setting: Setting) -> Self {
        match setting {
            Setting::ZeroShot => System::ZeroShot,
            Setting::FineTuned => System::Art,
            Setting::FineTunedKnowledge => System::ArtParacomet,
        }
    }
}

impl System {
    pub fn label(self) -> &'static str {
        match self {
            System::ZeroShot => "Zero-shot",
            System::Art => "ART",
            System::ArtParacomet => "ART + PARA-COMET",
        }
    }
}

/// Corpus-level scores, scaled to 0..100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub dataset: TestSet,
    pub system: System,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bertscore_f1: f64,
    pub n_items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Items whose generation failed; they score 0.
    #[serde(default)]
    pub n_failed: usize,
}

/// Per-item scores in 0..1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub enthymeme_id: String,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bertscore_f1: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub report: ScoreReport,
    pub items: Vec<ItemScores>,
}

fn best_bertscore(candidate: &TokenSequence, refs: &[TokenSequence], embedder: &dyn Embedder) -> Result<f64, MetricsError> {
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for r in refs {
        best = best.max(bertscore_f1(candidate, r, embedder)?);
    }
    Ok(best)
}

/// Scores one premise against its gold premises.
pub fn score_item(
    id: &str,
    candidate: Option<&str>,
    golds: &[String],
    embedder: &dyn Embedder,
) -> Result<ItemScores, MetricsError> {
    let refs: Vec<TokenSequence> = golds.iter().map(|g| tokenize(g)).filter(|t| !t.is_empty()).collect();
    if refs.is_empty() {
        return Err(MetricsError::NoGold(id.to_string()));
    }
    let cand = tokenize(candidate.unwrap_or(""));
    Ok(ItemScores {
        enthymeme_id: id.to_string(),
        bleu1: bleu(&cand, &refs, 1)?,
        bleu2: bleu(&cand, &refs, 2)?,
        bertscore_f1: best_bertscore(&cand, &refs, embedder)?,
        failed: candidate.is_none(),
    })
}

fn check_alignment(records: &[GenerationRecord], enthymemes: &[Enthymeme]) -> Result<(), MetricsError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.enthymeme_id()) {
            return Err(MetricsError::DuplicateGeneration(r.enthymeme_id().to_string()));
        }
    }
    let expected: BTreeSet<&str> = enthymemes.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<String> = expected.difference(&seen).map(|s| s.to_string()).collect();
    let unexpected: Vec<String> = seen.difference(&expected).map(|s| s.to_string()).collect();
    if missing.is_empty() && unexpected.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::Misaligned { missing, unexpected })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores a generation file against its test set.
///
/// Every enthymeme needs exactly one record and all records must come from
/// one setting. Failed records count as empty candidates. Items appear in
/// enthymeme order.
pub fn evaluate_corpus(
    records: &[GenerationRecord],
    enthymemes: &[Enthymeme],
    embedder: &dyn Embedder,
) -> Result<CorpusEvaluation, MetricsError> {
    let first = enthymemes.first().ok_or(MetricsError::EmptyCorpus)?;
    if let Some(other) = enthymemes.iter().find(|e| e.source != first.source) {
        return Err(MetricsError::MixedDatasets(first.source, other.source));
    }
    check_alignment(records, enthymemes)?;
    let setting = records[0].setting();
    if let Some(other) = records.iter().find(|r| r.setting() != setting) {
        return Err(MetricsError::MixedSystems(setting, other.setting()));
    }
    let by_id: BTreeMap<&str, &GenerationRecord> = records.iter().map(|r| (r.enthymeme_id(), r)).collect();
    let items = enthymemes
        .iter()
        .map(|e| {
            let premise = by_id[e.id.as_str()].premise().map(|g| g.implicit_premise.as_str());
            score_item(&e.id, premise, &e.gold_premises, embedder)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = ScoreReport {
        dataset: first.source,
        system: setting.into(),
        bleu1: 100.0 * mean(items.iter().map(|i| i.bleu1)),
        bleu2: 100.0 * mean(items.iter().map(|i| i.bleu2)),
        bertscore_f1: 100.0 * mean(items.iter().map(|i| i.bertscore_f1)),
        n_items: items.len(),
        p_value: None,
        n_failed: items.iter().filter(|i| i.failed).count(),
    };
    Ok(CorpusEvaluation { report, items })
}

/// Signed-rank test on per-item BERTScore F1 of two evaluations of the same test set.
pub fn compare(a: &CorpusEvaluation, b: &CorpusEvaluation) -> Result<WilcoxonResult, MetricsError> {
    if a.report.dataset != b.report.dataset {
        return Err(MetricsError::Incomparable(format!(
            "datasets {} and {}",
            a.report.dataset, b.report.dataset
        )));
    }
    let ids_a: Vec<&str> = a.items.iter().map(|i| i.enthymeme_id.as_str()).collect();
    let ids_b: Vec<&str> = b.items.iter().map(|i| i.enthymeme_id.as_str()).collect();
    if ids_a != ids_b {
        return Err(MetricsError::Incomparable("item ids differ".into()));
    }
    let fa: Vec<f64> = a.items.iter().map(|i| i.bertscore_f1).collect();
    let fb: Vec<f64> = b.items.iter().map(|i| i.bertscore_f1).collect();
    wilcoxon_signed_rank(&fa, &fb)
}

/// Plain-text table with one row per report, scores to two decimals.
pub fn render_score_table(reports: &[ScoreReport]) -> String {
    let header = ["Dataset", "System", "BLEU1", "BLEU2", "BS", "n", "p"];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.dataset.to_string(),
                r.system.label().to_string(),
                format!("{:.2}", r.bleu1),
                format!("{:.2}", r.bleu2),
                format!("{:.2}", r.bertscore_f1),
                r.n_items.to_string(),
                r.p_value.map_or_else(|| "-".to_string(), |p| format!("{p:.4}")),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &cells);
    }
    out
}
