//! Loading and filtering of the abductive training corpus and the three
//! enthymeme test sets.
//!
//! Every loader reads a line-oriented file, maps each record through a
//! source-specific adapter into a canonical type, and applies the record
//! filters. Records that fail a filter are dropped and counted by reason in
//! [`CorpusStats`]; lines that do not parse at all are counted separately as
//! malformed. Output order always follows file order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::sequencing::split_sentences;

/// Published sizes of the upstream releases.
pub const ART_TRAIN_SIZE: usize = 50481;
pub const ART_VALIDATION_SIZE: usize = 7252;
pub const ART_TEST_SIZE: usize = 14313;
pub const D1_TRIPLES: usize = 1654;
pub const D2_SIZE: usize = 494;
pub const D3_SIZE: usize = 112;

const MIN_TOKENS: usize = 3;
const MAX_TOKENS: usize = 60;

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did", "has", "have",
    "had", "can", "could", "will", "would", "shall", "should", "may", "might", "must", "ought",
    "need", "needs", "isn't", "aren't", "wasn't", "weren't", "don't", "doesn't", "didn't",
    "hasn't", "haven't", "hadn't", "can't", "cannot", "couldn't", "won't", "wouldn't", "shan't",
    "shouldn't", "mightn't", "mustn't", "needn't", "it's", "that's", "there's", "he's", "she's",
    "i'm", "you're", "we're", "they're", "i've", "you've", "we've", "they've", "i'll", "you'll",
    "he'll", "she'll", "we'll", "they'll", "i'd", "you'd", "he'd", "she'd", "we'd", "they'd",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "any", "every", "each", "no", "many", "few", "several", "all", "both",
    "much", "more", "most", "other", "another", "such",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("format {format} is not supported by the {dataset} loader")]
    UnsupportedFormat { format: InputFormat, dataset: Dataset },
    #[error("unknown {what}: {value:?}")]
    UnknownValue { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(CorpusError::UnknownValue {
                what: "split",
                value: s.to_string(),
            }),
        }
    }
}

/// One of the three enthymeme test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestSet {
    D1,
    D2,
    D3,
}

impl TestSet {
    pub const ALL: [TestSet; 3] = [TestSet::D1, TestSet::D2, TestSet::D3];
}

impl fmt::Display for TestSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestSet::D1 => "D1",
            TestSet::D2 => "D2",
            TestSet::D3 => "D3",
        })
    }
}

/// Any corpus a loader can read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "ART")]
    Art,
    D1,
    D2,
    D3,
}

impl From<TestSet> for Dataset {
    fn from(t: TestSet) -> Self {
        match t {
            TestSet::D1 => Dataset::D1,
            TestSet::D2 => Dataset::D2,
            TestSet::D3 => Dataset::D3,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dataset::Art => f.write_str("ART"),
            Dataset::D1 => f.write_str("D1"),
            Dataset::D2 => f.write_str("D2"),
            Dataset::D3 => f.write_str("D3"),
        }
    }
}

/// Raw release formats understood by the loaders.
///
/// | format      | loader | layout |
/// |-------------|--------|--------|
/// | `canonical` | all    | the canonical JSONL written by this crate |
/// | `anlg`      | ART    | JSONL `{story_id?, obs1, obs2, hyp}` |
/// | `arct`      | D1     | TSV `#id warrant0 warrant1 correctLabelW0orW1 reason claim [debateTitle debateInfo]` |
/// | `forum`     | D2     | JSONL `{id?, topic?, claim, premise, implicit_premises \| implicit_premise}` |
/// | `microtext` | D3     | JSONL `{id?, premise, claim, relation, implicit_premises, scheme?}` |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Canonical,
    Anlg,
    Arct,
    Forum,
    Microtext,
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Canonical => "canonical",
            InputFormat::Anlg => "anlg",
            InputFormat::Arct => "arct",
            InputFormat::Forum => "forum",
            InputFormat::Microtext => "microtext",
        })
    }
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(InputFormat::Canonical),
            "anlg" => Ok(InputFormat::Anlg),
            "arct" => Ok(InputFormat::Arct),
            "forum" => Ok(InputFormat::Forum),
            "microtext" => Ok(InputFormat::Microtext),
            _ => Err(CorpusError::UnknownValue {
                what: "format",
                value: s.to_string(),
            }),
        }
    }
}

/// Training instance: two observations and the plausible hypothesis linking them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbductivePair {
    pub id: String,
    pub obs1: String,
    pub obs2: String,
    pub hypothesis: String,
    pub split: Split,
}

/// Test instance: stated premise and claim plus the gold implicit premise(s).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enthymeme {
    pub id: String,
    pub stated_premise: String,
    pub stated_claim: String,
    pub gold_premises: Vec<String>,
    pub source: TestSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub raw_meta: BTreeMap<String, String>,
    /// Commonsense phrase attached by the augmentation step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_phrase: Option<String>,
}

impl Enthymeme {
    /// Checks the record invariants, returning the filter reason of the first violation.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.id.trim().is_empty() {
            return Err(reason::MISSING_FIELD);
        }
        if self.gold_premises.is_empty() || self.gold_premises.iter().any(|g| g.trim().is_empty()) {
            return Err(reason::EMPTY_GOLD);
        }
        if !is_well_formed_sentence(&self.stated_premise) {
            return Err(reason::ILL_FORMED_PREMISE);
        }
        if !is_well_formed_sentence(&self.stated_claim) {
            return Err(reason::ILL_FORMED_CLAIM);
        }
        if self.scheme.is_some() && self.source != TestSet::D3 {
            return Err(reason::UNEXPECTED_SCHEME);
        }
        Ok(())
    }
}

/// Filter reasons recorded in [`CorpusStats::filter_reasons`].
pub mod reason {
    pub const MISSING_FIELD: &str = "missing_field";
    pub const EMPTY_FIELD: &str = "empty_field";
    pub const EMPTY_GOLD: &str = "empty_gold";
    pub const ILL_FORMED_PREMISE: &str = "ill_formed_premise";
    pub const ILL_FORMED_CLAIM: &str = "ill_formed_claim";
    pub const NON_SUPPORT_RELATION: &str = "non_support_relation";
    pub const PREMISE_CHAIN: &str = "premise_chain";
    pub const DUPLICATE_ID: &str = "duplicate_id";
    pub const WRONG_SOURCE: &str = "wrong_source";
    pub const SPLIT_MISMATCH: &str = "split_mismatch";
    pub const INVALID_LABEL: &str = "invalid_label";
    pub const UNEXPECTED_SCHEME: &str = "unexpected_scheme";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub source: Dataset,
    pub loaded_count: usize,
    pub filtered_out_count: usize,
    pub filter_reasons: BTreeMap<String, usize>,
    pub malformed: Vec<MalformedLine>,
}

impl CorpusStats {
    fn new(source: Dataset) -> Self {
        CorpusStats {
            source,
            loaded_count: 0,
            filtered_out_count: 0,
            filter_reasons: BTreeMap::new(),
            malformed: Vec::new(),
        }
    }

    /// Records that parsed, before any filter ran.
    pub fn pre_filter_count(&self) -> usize {
        self.loaded_count + self.filtered_out_count
    }

    fn reject(&mut self, reason: &str) {
        self.filtered_out_count += 1;
        *self.filter_reasons.entry(reason.to_string()).or_default() += 1;
    }

    fn malformed(&mut self, line: usize, message: impl Into<String>) {
        self.malformed.push(MalformedLine {
            line,
            message: message.into(),
        });
    }

    /// One-line summary, e.g. `D3 parsed=130 kept=112 dropped=18 malformed=0 (non_support_relation=11, ...)`.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} parsed={} kept={} dropped={} malformed={}",
            self.source,
            self.pre_filter_count(),
            self.loaded_count,
            self.filtered_out_count,
            self.malformed.len()
        );
        if !self.filter_reasons.is_empty() {
            let reasons: Vec<String> = self
                .filter_reasons
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            s.push_str(&format!(" ({})", reasons.join(", ")));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub stats: CorpusStats,
}

fn normalize_token(token: &str) -> String {
    token
        .replace('\u{2019}', "'")
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
        .trim_matches('\'')
        .to_lowercase()
}

fn has_verbal_suffix(token: &str) -> bool {
    if !token.chars().all(|c| c.is_alphabetic()) {
        return false;
    }
    let n = token.chars().count();
    (token.ends_with("ing") && n > 4)
        || (token.ends_with("ed") && n > 3)
        || (token.ends_with('s')
            && n >= 3
            && !token.ends_with("ss")
            && !token.ends_with("us")
            && !token.ends_with("is"))
}

fn is_shouting(text: &str) -> bool {
    let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

/// Heuristic test for a complete, single, declarative-looking sentence.
///
/// Accepts text with 3 to 60 tokens that the sentence splitter keeps in one
/// piece, that is not written entirely in capitals, and that has a
/// finite-verb candidate: an auxiliary, copula or modal from a closed list,
/// or a token ending in `-s`, `-ed` or `-ing` whose previous token is not a
/// determiner.
pub fn is_well_formed_sentence(text: &str) -> bool {
    let text = text.trim();
    if text.is_empty() {
        return false;
    }
    let tokens: Vec<String> = text.split_whitespace().map(normalize_token).collect();
    if tokens.len() < MIN_TOKENS || tokens.len() > MAX_TOKENS {
        return false;
    }
    if split_sentences(text).len() != 1 || is_shouting(text) {
        return false;
    }
    tokens.iter().enumerate().any(|(i, tok)| {
        if AUXILIARIES.contains(&tok.as_str()) {
            return true;
        }
        let after_determiner = i > 0 && DETERMINERS.contains(&tokens[i - 1].as_str());
        has_verbal_suffix(tok) && !after_determiner
    })
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_object(line: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err("not a JSON object".to_string()),
        Err(e) => Err(e.to_string()),
    }
}

fn get_str(obj: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    })
}

fn get_str_list(obj: &Map<String, Value>, list_key: &str, single_key: &str) -> Option<Vec<String>> {
    match obj.get(list_key) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => get_str(obj, &[single_key]).map(|s| vec![s]),
    }
}

fn get_meta(obj: &Map<String, Value>) -> BTreeMap<String, String> {
    match obj.get("raw_meta") {
        Some(Value::Object(m)) => m
            .iter()
            .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
            .collect(),
        _ => BTreeMap::new(),
    }
}

fn clean(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Loads one split of the abductive training corpus.
pub fn load_art(path: &Path, split: Split, format: InputFormat) -> Result<Loaded<AbductivePair>, CorpusError> {
    if !matches!(format, InputFormat::Canonical | InputFormat::Anlg) {
        return Err(CorpusError::UnsupportedFormat {
            format,
            dataset: Dataset::Art,
        });
    }
    let mut stats = CorpusStats::new(Dataset::Art);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut story_occurrences: HashMap<String, usize> = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        let obj = match parse_object(&line) {
            Ok(o) => o,
            Err(e) => {
                stats.malformed(line_no, e);
                continue;
            }
        };
        let fields = match format {
            InputFormat::Canonical => (
                get_str(&obj, &["id"]),
                get_str(&obj, &["obs1"]),
                get_str(&obj, &["obs2"]),
                get_str(&obj, &["hypothesis"]),
            ),
            _ => {
                let id = match get_str(&obj, &["story_id", "id"]) {
                    Some(story) => {
                        let k = story_occurrences.entry(story.clone()).or_default();
                        *k += 1;
                        Some(format!("{story}-{k}"))
                    }
                    None => Some(format!("{split}-{line_no}")),
                };
                (
                    id,
                    get_str(&obj, &["obs1"]),
                    get_str(&obj, &["obs2"]),
                    get_str(&obj, &["hyp", "hypothesis"]),
                )
            }
        };
        let (Some(id), Some(obs1), Some(obs2), Some(hypothesis)) = fields else {
            stats.reject(reason::MISSING_FIELD);
            continue;
        };
        if format == InputFormat::Canonical {
            match get_str(&obj, &["split"]).map(|s| s.parse::<Split>()) {
                Some(Ok(s)) if s == split => {}
                Some(Ok(_)) => {
                    stats.reject(reason::SPLIT_MISMATCH);
                    continue;
                }
                _ => {
                    stats.reject(reason::MISSING_FIELD);
                    continue;
                }
            }
        }
        let (obs1, obs2, hypothesis) = (clean(&obs1), clean(&obs2), clean(&hypothesis));
        if id.trim().is_empty() || obs1.is_empty() || obs2.is_empty() || hypothesis.is_empty() {
            stats.reject(reason::EMPTY_FIELD);
            continue;
        }
        if !seen.insert(id.clone()) {
            stats.reject(reason::DUPLICATE_ID);
            continue;
        }
        records.push(AbductivePair {
            id,
            obs1,
            obs2,
            hypothesis,
            split,
        });
    }
    stats.loaded_count = records.len();
    Ok(Loaded { records, stats })
}

/// Source-specific record before the shared filters run.
struct Candidate {
    id: Option<String>,
    premise: Option<String>,
    claim: Option<String>,
    gold: Option<Vec<String>>,
    scheme: Option<String>,
    meta: BTreeMap<String, String>,
}

enum Parsed {
    Candidate(Candidate),
    Rejected(&'static str),
    Malformed(String),
}

struct EnthymemeLoader {
    source: TestSet,
    stats: CorpusStats,
    seen: HashSet<String>,
    records: Vec<Enthymeme>,
}

impl EnthymemeLoader {
    fn new(source: TestSet) -> Self {
        EnthymemeLoader {
            source,
            stats: CorpusStats::new(source.into()),
            seen: HashSet::new(),
            records: Vec::new(),
        }
    }

    fn push(&mut self, line_no: usize, parsed: Parsed) {
        let c = match parsed {
            Parsed::Malformed(msg) => return self.stats.malformed(line_no, msg),
            Parsed::Rejected(r) => return self.stats.reject(r),
            Parsed::Candidate(c) => c,
        };
        let (Some(premise), Some(claim), Some(gold)) = (c.premise, c.claim, c.gold) else {
            return self.stats.reject(reason::MISSING_FIELD);
        };
        let id = c
            .id
            .unwrap_or_else(|| format!("{}-{line_no}", self.source.to_string().to_lowercase()));
        let record = Enthymeme {
            id,
            stated_premise: clean(&premise),
            stated_claim: clean(&claim),
            gold_premises: gold.iter().map(|g| clean(g)).collect(),
            source: self.source,
            scheme: c.scheme.filter(|s| !s.trim().is_empty()),
            raw_meta: c.meta,
            knowledge_phrase: None,
        };
        if let Err(r) = record.check() {
            return self.stats.reject(r);
        }
        if !self.seen.insert(record.id.clone()) {
            return self.stats.reject(reason::DUPLICATE_ID);
        }
        self.records.push(record);
    }

    fn finish(mut self) -> Loaded<Enthymeme> {
        self.stats.loaded_count = self.records.len();
        Loaded {
            records: self.records,
            stats: self.stats,
        }
    }
}

fn parse_canonical(line: &str, expected: TestSet) -> Parsed {
    let obj = match parse_object(line) {
        Ok(o) => o,
        Err(e) => return Parsed::Malformed(e),
    };
    let source = match get_str(&obj, &["source"]) {
        Some(s) => s,
        None => return Parsed::Rejected(reason::MISSING_FIELD),
    };
    if source != expected.to_string() {
        return Parsed::Rejected(reason::WRONG_SOURCE);
    }
    let mut meta = get_meta(&obj);
    if let Some(phrase) = get_str(&obj, &["knowledge_phrase"]) {
        meta.insert("knowledge_phrase".into(), phrase);
    }
    Parsed::Candidate(Candidate {
        id: get_str(&obj, &["id"]),
        premise: get_str(&obj, &["stated_premise"]),
        claim: get_str(&obj, &["stated_claim"]),
        gold: get_str_list(&obj, "gold_premises", "gold_premise"),
        scheme: get_str(&obj, &["scheme"]),
        meta,
    })
}

fn parse_arct(line: &str) -> Parsed {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 6 {
        return Parsed::Malformed(format!("expected at least 6 tab-separated columns, got {}", cols.len()));
    }
    let nonempty = |s: &str| Some(s.trim().to_string()).filter(|s| !s.is_empty());
    let gold = match cols[3].trim() {
        "0" => nonempty(cols[1]),
        "1" => nonempty(cols[2]),
        _ => return Parsed::Rejected(reason::INVALID_LABEL),
    };
    let mut meta = BTreeMap::new();
    for (key, idx) in [("debate_title", 6), ("debate_info", 7)] {
        if let Some(v) = cols.get(idx).and_then(|s| nonempty(s)) {
            meta.insert(key.to_string(), v);
        }
    }
    Parsed::Candidate(Candidate {
        id: nonempty(cols[0]),
        premise: nonempty(cols[4]),
        claim: nonempty(cols[5]),
        gold: gold.map(|g| vec![g]),
        scheme: None,
        meta,
    })
}

fn parse_forum(line: &str) -> Parsed {
    let obj = match parse_object(line) {
        Ok(o) => o,
        Err(e) => return Parsed::Malformed(e),
    };
    let mut meta = BTreeMap::new();
    if let Some(topic) = get_str(&obj, &["topic"]) {
        meta.insert("topic".to_string(), topic);
    }
    Parsed::Candidate(Candidate {
        id: get_str(&obj, &["id"]),
        premise: get_str(&obj, &["premise"]),
        claim: get_str(&obj, &["claim"]),
        gold: get_str_list(&obj, "implicit_premises", "implicit_premise"),
        scheme: None,
        meta,
    })
}

fn parse_microtext(line: &str) -> Parsed {
    let obj = match parse_object(line) {
        Ok(o) => o,
        Err(e) => return Parsed::Malformed(e),
    };
    let Some(relation) = get_str(&obj, &["relation"]) else {
        return Parsed::Rejected(reason::MISSING_FIELD);
    };
    if relation.trim() != "support" {
        return Parsed::Rejected(reason::NON_SUPPORT_RELATION);
    }
    let gold = get_str_list(&obj, "implicit_premises", "implicit_premise");
    if gold.as_ref().is_some_and(|g| g.len() > 1) {
        return Parsed::Rejected(reason::PREMISE_CHAIN);
    }
    let mut meta = BTreeMap::new();
    meta.insert("relation".to_string(), relation);
    Parsed::Candidate(Candidate {
        id: get_str(&obj, &["id"]),
        premise: get_str(&obj, &["premise"]),
        claim: get_str(&obj, &["claim"]),
        gold,
        scheme: get_str(&obj, &["scheme"]),
        meta,
    })
}

fn load_enthymemes(
    path: &Path,
    source: TestSet,
    format: InputFormat,
) -> Result<Loaded<Enthymeme>, CorpusError> {
    let native = match source {
        TestSet::D1 => InputFormat::Arct,
        TestSet::D2 => InputFormat::Forum,
        TestSet::D3 => InputFormat::Microtext,
    };
    if format != InputFormat::Canonical && format != native {
        return Err(CorpusError::UnsupportedFormat {
            format,
            dataset: source.into(),
        });
    }
    let mut loader = EnthymemeLoader::new(source);
    for (line_no, line) in read_lines(path)? {
        if format == InputFormat::Arct && line.starts_with("#id") {
            continue;
        }
        let parsed = match format {
            InputFormat::Canonical => parse_canonical(&line, source),
            InputFormat::Arct => parse_arct(&line),
            InputFormat::Forum => parse_forum(&line),
            _ => parse_microtext(&line),
        };
        loader.push(line_no, parsed);
    }
    let mut loaded = loader.finish();
    for e in &mut loaded.records {
        e.knowledge_phrase = e.raw_meta.remove("knowledge_phrase");
    }
    Ok(loaded)
}

/// Loads the argument-reasoning-comprehension triples; the labeled-correct
/// warrant becomes the single gold premise.
pub fn load_d1(path: &Path, format: InputFormat) -> Result<Loaded<Enthymeme>, CorpusError> {
    load_enthymemes(path, TestSet::D1, format)
}

/// Loads the debate-forum enthymemes; every annotated implicit premise is kept as a reference.
pub fn load_d2(path: &Path, format: InputFormat) -> Result<Loaded<Enthymeme>, CorpusError> {
    load_enthymemes(path, TestSet::D2, format)
}

/// Loads the microtext enthymemes, keeping support relations with exactly one implicit premise.
pub fn load_d3(path: &Path, format: InputFormat) -> Result<Loaded<Enthymeme>, CorpusError> {
    load_enthymemes(path, TestSet::D3, format)
}

pub fn load_test_set(path: &Path, source: TestSet, format: InputFormat) -> Result<Loaded<Enthymeme>, CorpusError> {
    load_enthymemes(path, source, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn well_formedness_examples() {
        assert!(is_well_formed_sentence("Vaccinations save lives"));
        assert!(is_well_formed_sentence("Vaccination should be mandatory for all children"));
        assert!(!is_well_formed_sentence(""));
        assert!(!is_well_formed_sentence("A dog in the stable."));
    }

    #[test]
    fn well_formedness_rejections() {
        assert!(!is_well_formed_sentence("Fixed economy"));
        assert!(!is_well_formed_sentence("The dog barked. The cat ran."));
        assert!(!is_well_formed_sentence("VACCINES SAVE LIVES NOW"));
        assert!(!is_well_formed_sentence("in the houses"));
        let long = vec!["is"; 61].join(" ");
        assert!(!is_well_formed_sentence(&long));
        assert!(is_well_formed_sentence("Fixed the economy"));
        assert!(is_well_formed_sentence("States need special schools for the deaf"));
        assert!(is_well_formed_sentence("It's the humanities, we need them"));
    }

    #[test]
    fn art_example_line() {
        let f = fixture(&[
            r#"{"obs1":"Alex had his heart set on an ivy league college","obs2":"Alex ended up achieving his dream of getting into the school.","hyp":"Alex applied to Harvard"}"#,
        ]);
        let loaded = load_art(f.path(), Split::Train, InputFormat::Anlg).unwrap();
        assert_eq!(loaded.records.len(), 1);
        let p = &loaded.records[0];
        assert_eq!(p.obs1, "Alex had his heart set on an ivy league college");
        assert_eq!(p.obs2, "Alex ended up achieving his dream of getting into the school.");
        assert_eq!(p.hypothesis, "Alex applied to Harvard");
        assert_eq!(p.split, Split::Train);
    }

    #[test]
    fn art_empty_file() {
        let f = fixture(&[]);
        let loaded = load_art(f.path(), Split::Train, InputFormat::Anlg).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.stats.loaded_count, 0);
    }

    #[test]
    fn art_blank_hypothesis_is_filtered() {
        let f = fixture(&[
            r#"{"obs1":"A b c.","obs2":"D e f.","hyp":"G h i."}"#,
            r#"{"obs1":"A b c.","obs2":"D e f.","hyp":"   "}"#,
        ]);
        let loaded = load_art(f.path(), Split::Train, InputFormat::Anlg).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.stats.filtered_out_count, 1);
        assert_eq!(loaded.stats.filter_reasons[reason::EMPTY_FIELD], 1);
    }

    #[test]
    fn art_malformed_and_duplicates() {
        let f = fixture(&[
            r#"{"id":"a","obs1":"x","obs2":"y","hypothesis":"z","split":"train"}"#,
            "{not json",
            r#"{"id":"a","obs1":"x","obs2":"y","hypothesis":"z","split":"train"}"#,
            r#"{"id":"b","obs1":"x","obs2":"y","hypothesis":"z","split":"test"}"#,
            r#"{"id":"c","obs1":"x","obs2":"y"}"#,
        ]);
        let loaded = load_art(f.path(), Split::Train, InputFormat::Canonical).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.stats.malformed.len(), 1);
        assert_eq!(loaded.stats.malformed[0].line, 2);
        assert_eq!(loaded.stats.filter_reasons[reason::DUPLICATE_ID], 1);
        assert_eq!(loaded.stats.filter_reasons[reason::SPLIT_MISMATCH], 1);
        assert_eq!(loaded.stats.filter_reasons[reason::MISSING_FIELD], 1);
        assert_eq!(loaded.stats.pre_filter_count(), 4);
    }

    #[test]
    fn anlg_repeated_story_ids_stay_unique() {
        let f = fixture(&[
            r#"{"story_id":"s1","obs1":"x","obs2":"y","hyp":"h1"}"#,
            r#"{"story_id":"s1","obs1":"x","obs2":"y","hyp":"h2"}"#,
        ]);
        let loaded = load_art(f.path(), Split::Train, InputFormat::Anlg).unwrap();
        let ids: Vec<_> = loaded.records.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["s1-1", "s1-2"]);
    }

    #[test]
    fn missing_path_is_fatal() {
        let err = load_art(Path::new("/nonexistent/art.jsonl"), Split::Train, InputFormat::Anlg);
        assert!(matches!(err, Err(CorpusError::Io { .. })));
        assert!(matches!(
            load_d1(Path::new("/nonexistent/d1.tsv"), InputFormat::Arct),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn wrong_format_is_rejected() {
        let f = fixture(&[]);
        assert!(matches!(
            load_d2(f.path(), InputFormat::Arct),
            Err(CorpusError::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            load_art(f.path(), Split::Train, InputFormat::Forum),
            Err(CorpusError::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn arct_keeps_correct_warrant() {
        let f = fixture(&[
            "#id\twarrant0\twarrant1\tcorrectLabelW0orW1\treason\tclaim\tdebateTitle\tdebateInfo",
            "d1-1\tvaccines are risky\tvaccines protect everyone\t1\tVaccinations save lives\tVaccination should be mandatory for all children\tVaccines\tShould they be mandatory?",
            "d1-2\tw0\tw1\t2\tVaccinations save lives\tVaccination should be mandatory\tT\tI",
            "short\trow",
        ]);
        let loaded = load_d1(f.path(), InputFormat::Arct).unwrap();
        assert_eq!(loaded.records.len(), 1);
        let e = &loaded.records[0];
        assert_eq!(e.source, TestSet::D1);
        assert_eq!(e.stated_premise, "Vaccinations save lives");
        assert_eq!(e.stated_claim, "Vaccination should be mandatory for all children");
        assert_eq!(e.gold_premises, vec!["vaccines protect everyone"]);
        assert_eq!(e.raw_meta["debate_title"], "Vaccines");
        assert_eq!(loaded.stats.filter_reasons[reason::INVALID_LABEL], 1);
        assert_eq!(loaded.stats.malformed.len(), 1);
    }

    #[test]
    fn forum_keeps_all_gold_premises() {
        let f = fixture(&[
            r#"{"id":"f1","topic":"economy","claim":"Obama fixed the economy","premise":"Obama's spending was much lower than Bush's","implicit_premises":["Obama spends less money than Bush.","Lower spending helps the economy."]}"#,
            r#"{"id":"f2","claim":"Obama fixed the economy","premise":"Spending","implicit_premise":"x"}"#,
        ]);
        let loaded = load_d2(f.path(), InputFormat::Forum).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.records[0].gold_premises.len(), 2);
        assert_eq!(loaded.stats.filter_reasons[reason::ILL_FORMED_PREMISE], 1);
    }

    #[test]
    fn microtext_filters() {
        let f = fixture(&[
            r#"{"id":"m1","premise":"The morning-after pill has a number of side effects.","claim":"The morning-after pill should only be prescribed after counselling by a physician.","relation":"support","implicit_premises":["Physicians and pharmacists inform about side effects."],"scheme":"Practical Evaluation"}"#,
            r#"{"id":"m2","premise":"The pill has side effects.","claim":"It should be banned now.","relation":"attack","implicit_premises":["x"]}"#,
            r#"{"id":"m3","premise":"The pill has side effects.","claim":"It should be banned now.","relation":"support","implicit_premises":["x is y.","y is z."]}"#,
        ]);
        let loaded = load_d3(f.path(), InputFormat::Microtext).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.records[0].scheme.as_deref(), Some("Practical Evaluation"));
        assert_eq!(loaded.stats.filter_reasons[reason::NON_SUPPORT_RELATION], 1);
        assert_eq!(loaded.stats.filter_reasons[reason::PREMISE_CHAIN], 1);
        assert_eq!(loaded.stats.filtered_out_count, 2);
    }

    #[test]
    fn canonical_round_trip_keeps_knowledge_phrase() {
        let e = Enthymeme {
            id: "x1".into(),
            stated_premise: "Vaccinations save lives".into(),
            stated_claim: "Vaccination should be mandatory for all children".into(),
            gold_premises: vec!["Vaccines protect children.".into()],
            source: TestSet::D1,
            scheme: None,
            raw_meta: BTreeMap::new(),
            knowledge_phrase: Some("to be safe".into()),
        };
        let f = fixture(&[&serde_json::to_string(&e).unwrap()]);
        let loaded = load_d1(f.path(), InputFormat::Canonical).unwrap();
        assert_eq!(loaded.records, vec![e.clone()]);
        let wrong = load_d2(f.path(), InputFormat::Canonical).unwrap();
        assert_eq!(wrong.stats.filter_reasons[reason::WRONG_SOURCE], 1);
    }

    #[test]
    fn scheme_outside_d3_violates_invariant() {
        let f = fixture(&[
            r#"{"id":"x","stated_premise":"Vaccinations save lives","stated_claim":"Vaccination should be mandatory","gold_premises":["g"],"source":"D1","scheme":"Practical Evaluation"}"#,
        ]);
        let loaded = load_d1(f.path(), InputFormat::Canonical).unwrap();
        assert_eq!(loaded.stats.filter_reasons[reason::UNEXPECTED_SCHEME], 1);
    }
}
