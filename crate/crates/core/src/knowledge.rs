//! Discourse-aware commonsense inferences and intent selection.
//!
//! A [`KnowledgeBackend`] turns a short discourse (one sentence per entry)
//! into ranked phrases for each of the nine social-commonsense relations of
//! each sentence. The augmentation step only uses the top `xIntent` phrase
//! of the first sentence; the other relations are carried along unused.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sequencing::SEP;

/// Environment variable naming the live model-server endpoint.
pub const BACKEND_URL_ENV: &str = "KNOWLEDGE_BACKEND_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationName {
    #[serde(rename = "xIntent")]
    XIntent,
    #[serde(rename = "xNeed")]
    XNeed,
    #[serde(rename = "xAttr")]
    XAttr,
    #[serde(rename = "xEffect")]
    XEffect,
    #[serde(rename = "xWant")]
    XWant,
    #[serde(rename = "xReact")]
    XReact,
    #[serde(rename = "oReact")]
    OReact,
    #[serde(rename = "oWant")]
    OWant,
    #[serde(rename = "oEffect")]
    OEffect,
}

impl RelationName {
    pub const ALL: [RelationName; 9] = [
        RelationName::XIntent,
        RelationName::XNeed,
        RelationName::XAttr,
        RelationName::XEffect,
        RelationName::XWant,
        RelationName::XReact,
        RelationName::OReact,
        RelationName::OWant,
        RelationName::OEffect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationName::XIntent => "xIntent",
            RelationName::XNeed => "xNeed",
            RelationName::XAttr => "xAttr",
            RelationName::XEffect => "xEffect",
            RelationName::XWant => "xWant",
            RelationName::XReact => "xReact",
            RelationName::OReact => "oReact",
            RelationName::OWant => "oWant",
            RelationName::OEffect => "oEffect",
        }
    }
}

impl fmt::Display for RelationName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationName {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| KnowledgeError::Protocol(format!("unknown relation {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge backend {backend} unavailable: {message}")]
    Unavailable { backend: String, message: String },
    #[error("no inference for sentence {index} relation {relation}")]
    MissingInference { index: usize, relation: RelationName },
    #[error("invalid discourse: {0}")]
    InvalidDiscourse(String),
    #[error("sentence index {index} outside a discourse of {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no cached bundle for key {0}")]
    CacheMiss(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cache i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl KnowledgeError {
    /// Whether repeating the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, KnowledgeError::Unavailable { .. })
    }
}

/// Ranked phrases per (sentence index, relation), as exchanged on the wire:
/// `{"<idx>": {"<relation>": [phrases...]}}`.
pub type WireInferences = BTreeMap<String, BTreeMap<String, Vec<String>>>;

/// Commonsense inferences for one discourse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BundleWire", into = "BundleWire")]
pub struct CommonsenseBundle {
    discourse: Vec<String>,
    inferences: BTreeMap<(usize, RelationName), Vec<String>>,
    backend_id: String,
    retrieved_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct BundleWire {
    discourse: Vec<String>,
    inferences: WireInferences,
    backend_id: String,
    retrieved_at: DateTime<Utc>,
}

impl TryFrom<BundleWire> for CommonsenseBundle {
    type Error = KnowledgeError;

    fn try_from(w: BundleWire) -> Result<Self, Self::Error> {
        let inferences = parse_wire(&w.inferences, true)?;
        CommonsenseBundle::new(w.discourse, inferences, w.backend_id, w.retrieved_at)
    }
}

impl From<CommonsenseBundle> for BundleWire {
    fn from(b: CommonsenseBundle) -> Self {
        let inferences = b.to_wire();
        BundleWire {
            discourse: b.discourse,
            inferences,
            backend_id: b.backend_id,
            retrieved_at: b.retrieved_at,
        }
    }
}

/// Converts the wire map. Unknown relation names fail when `strict`, and are skipped otherwise.
pub fn parse_wire(
    wire: &WireInferences,
    strict: bool,
) -> Result<BTreeMap<(usize, RelationName), Vec<String>>, KnowledgeError> {
    let mut out = BTreeMap::new();
    for (idx, relations) in wire {
        let index: usize = idx
            .parse()
            .map_err(|_| KnowledgeError::Protocol(format!("bad sentence index {idx:?}")))?;
        for (name, beams) in relations {
            match name.parse::<RelationName>() {
                Ok(rel) => {
                    out.insert((index, rel), beams.clone());
                }
                Err(e) if strict => return Err(e),
                Err(_) => log::debug!("ignoring unknown relation {name:?}"),
            }
        }
    }
    Ok(out)
}

impl CommonsenseBundle {
    /// Builds a bundle, trimming phrases and rejecting empty beam lists or out-of-range indices.
    pub fn new(
        discourse: Vec<String>,
        inferences: BTreeMap<(usize, RelationName), Vec<String>>,
        backend_id: impl Into<String>,
        retrieved_at: DateTime<Utc>,
    ) -> Result<Self, KnowledgeError> {
        let len = discourse.len();
        let mut clean = BTreeMap::new();
        for ((index, relation), beams) in inferences {
            if index >= len {
                return Err(KnowledgeError::IndexOutOfRange { index, len });
            }
            let beams: Vec<String> = beams
                .iter()
                .map(|b| collapse_ws(b))
                .filter(|b| !b.is_empty())
                .collect();
            if beams.is_empty() {
                return Err(KnowledgeError::MissingInference { index, relation });
            }
            clean.insert((index, relation), beams);
        }
        Ok(CommonsenseBundle {
            discourse,
            inferences: clean,
            backend_id: backend_id.into(),
            retrieved_at,
        })
    }

    pub fn discourse(&self) -> &[String] {
        &self.discourse
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn retrieved_at(&self) -> DateTime<Utc> {
        self.retrieved_at
    }

    /// Ranked beams for one sentence and relation.
    pub fn beams(&self, index: usize, relation: RelationName) -> Option<&[String]> {
        self.inferences.get(&(index, relation)).map(Vec::as_slice)
    }

    pub fn inferences(&self) -> &BTreeMap<(usize, RelationName), Vec<String>> {
        &self.inferences
    }

    /// Sentence indices that carry at least one inference.
    pub fn indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.inferences.keys().map(|(i, _)| *i).collect();
        idx.dedup();
        idx
    }

    pub fn to_wire(&self) -> WireInferences {
        let mut wire = WireInferences::new();
        for ((idx, rel), beams) in &self.inferences {
            wire.entry(idx.to_string())
                .or_default()
                .insert(rel.as_str().to_string(), beams.clone());
        }
        wire
    }
}

/// Source of commonsense inferences.
pub trait KnowledgeBackend: Send + Sync {
    fn id(&self) -> &str;

    fn infer(&self, discourse: &[String]) -> Result<CommonsenseBundle, KnowledgeError>;
}

impl<B: KnowledgeBackend + ?Sized> KnowledgeBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn infer(&self, discourse: &[String]) -> Result<CommonsenseBundle, KnowledgeError> {
        (**self).infer(discourse)
    }
}

fn validate_discourse(discourse: &[String]) -> Result<(), KnowledgeError> {
    if discourse.is_empty() {
        return Err(KnowledgeError::InvalidDiscourse("discourse is empty".into()));
    }
    if let Some(i) = discourse.iter().position(|s| s.trim().is_empty()) {
        return Err(KnowledgeError::InvalidDiscourse(format!("sentence {i} is empty")));
    }
    Ok(())
}

/// Runs `backend` on `discourse` and checks that every sentence the backend
/// answered for carries all nine relations.
pub fn infer(discourse: &[String], backend: &dyn KnowledgeBackend) -> Result<CommonsenseBundle, KnowledgeError> {
    validate_discourse(discourse)?;
    let bundle = backend.infer(discourse)?;
    if bundle.discourse() != discourse {
        return Err(KnowledgeError::Protocol(format!(
            "backend {} answered for a different discourse",
            backend.id()
        )));
    }
    for index in bundle.indices() {
        for relation in RelationName::ALL {
            if bundle.beams(index, relation).is_none() {
                return Err(KnowledgeError::MissingInference { index, relation });
            }
        }
    }
    Ok(bundle)
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Makes a phrase safe to place between encoder delimiters: no newlines,
/// single spaces, no delimiter literal and no terminal sentence punctuation.
pub fn sanitize_phrase(phrase: &str) -> String {
    let without_sep = phrase.replace(SEP, " ");
    let collapsed = collapse_ws(&without_sep);
    collapsed
        .trim_end_matches(|c: char| matches!(c, '.' | '!' | '?') || c.is_whitespace())
        .to_string()
}

/// Top-ranked `xIntent` phrase of the first sentence, sanitized.
pub fn select_intent(bundle: &CommonsenseBundle) -> Result<String, KnowledgeError> {
    let missing = KnowledgeError::MissingInference {
        index: 0,
        relation: RelationName::XIntent,
    };
    let beams = bundle.beams(0, RelationName::XIntent).ok_or(missing)?;
    beams
        .iter()
        .map(|b| sanitize_phrase(b))
        .find(|b| !b.is_empty())
        .ok_or(KnowledgeError::MissingInference {
            index: 0,
            relation: RelationName::XIntent,
        })
}

/// Stable cache key of a discourse: hex SHA-256 of its JSON array encoding.
pub fn cache_key(discourse: &[String]) -> String {
    let encoded = serde_json::to_vec(discourse).expect("string list always serializes");
    hex::encode(Sha256::digest(encoded))
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    bundle: CommonsenseBundle,
}

/// Line-delimited JSON cache of bundles keyed by [`cache_key`].
///
/// Reads are shared; appends go through one writer lock. Without a fallback
/// the cache is read-only and a miss is an error. With a fallback, misses
/// are fetched, appended to the file and served from memory afterwards.
pub struct CacheKnowledgeBackend {
    path: PathBuf,
    entries: RwLock<HashMap<String, CommonsenseBundle>>,
    writer: Mutex<()>,
    fallback: Option<Box<dyn KnowledgeBackend>>,
}

impl CacheKnowledgeBackend {
    /// Loads the cache file. A missing file is an empty cache.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, KnowledgeError> {
        let path = path.into();
        let mut entries = HashMap::new();
        match File::open(&path) {
            Ok(f) => {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(|source| KnowledgeError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: CacheLine = serde_json::from_str(&line).map_err(|e| {
                        KnowledgeError::Protocol(format!("{}:{}: {e}", path.display(), i + 1))
                    })?;
                    entries.insert(entry.key, entry.bundle);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(source) => return Err(KnowledgeError::Io { path, source }),
        }
        Ok(CacheKnowledgeBackend {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
            fallback: None,
        })
    }

    pub fn with_fallback(mut self, fallback: Box<dyn KnowledgeBackend>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends a bundle to the cache file and the in-memory index.
    pub fn insert(&self, bundle: CommonsenseBundle) -> Result<(), KnowledgeError> {
        let key = cache_key(bundle.discourse());
        let _guard = self.writer.lock().unwrap();
        if self.entries.read().unwrap().contains_key(&key) {
            return Ok(());
        }
        let io_err = |source| KnowledgeError::Io {
            path: self.path.clone(),
            source,
        };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        let line = CacheLine { key: key.clone(), bundle };
        let mut encoded = serde_json::to_vec(&line).expect("bundle serializes");
        encoded.push(b'\n');
        f.write_all(&encoded).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        self.entries.write().unwrap().insert(key, line.bundle);
        Ok(())
    }
}

impl KnowledgeBackend for CacheKnowledgeBackend {
    fn id(&self) -> &str {
        "cache"
    }

    fn infer(&self, discourse: &[String]) -> Result<CommonsenseBundle, KnowledgeError> {
        let key = cache_key(discourse);
        if let Some(b) = self.entries.read().unwrap().get(&key) {
            return Ok(b.clone());
        }
        match &self.fallback {
            Some(fallback) => {
                let bundle = infer(discourse, fallback.as_ref())?;
                self.insert(bundle.clone())?;
                Ok(bundle)
            }
            None => Err(KnowledgeError::CacheMiss(key)),
        }
    }
}

/// Client for a model server speaking
/// `POST {"sentences": [...]}` → `{"inferences": {"<idx>": {"<relation>": [...]}}}`.
pub struct HttpKnowledgeBackend {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct InferRequest<'a> {
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct InferResponse {
    inferences: WireInferences,
}

impl HttpKnowledgeBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, KnowledgeError> {
        let url = url.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| KnowledgeError::Unavailable {
                backend: url.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpKnowledgeBackend { url, client })
    }

    /// Reads the endpoint from `KNOWLEDGE_BACKEND_URL`.
    pub fn from_env() -> Result<Self, KnowledgeError> {
        let url = std::env::var(BACKEND_URL_ENV).map_err(|_| KnowledgeError::Unavailable {
            backend: "live".into(),
            message: format!("{BACKEND_URL_ENV} is not set"),
        })?;
        Self::new(url, Duration::from_secs(60))
    }
}

impl KnowledgeBackend for HttpKnowledgeBackend {
    fn id(&self) -> &str {
        &self.url
    }

    fn infer(&self, discourse: &[String]) -> Result<CommonsenseBundle, KnowledgeError> {
        let unavailable = |message: String| KnowledgeError::Unavailable {
            backend: self.url.clone(),
            message,
        };
        let response = self
            .client
            .post(&self.url)
            .json(&InferRequest { sentences: discourse })
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(unavailable(format!("server answered {status}")));
        }
        if !status.is_success() {
            return Err(KnowledgeError::Protocol(format!("server answered {status}")));
        }
        let body: InferResponse = response
            .json()
            .map_err(|e| KnowledgeError::Protocol(e.to_string()))?;
        let inferences = parse_wire(&body.inferences, false)?;
        CommonsenseBundle::new(discourse.to_vec(), inferences, self.url.clone(), Utc::now())
    }
}

const STUB_POOLS: [(RelationName, &[&str]); 9] = [
    (
        RelationName::XIntent,
        &[
            "to find something",
            "to be nice",
            "to learn more",
            "to feel better",
            "to get something done",
            "to help others",
        ],
    ),
    (
        RelationName::XNeed,
        &["to decide to act", "to prepare", "to have time", "to find a way"],
    ),
    (
        RelationName::XAttr,
        &["curious", "determined", "caring", "thoughtful", "careful"],
    ),
    (
        RelationName::XEffect,
        &["learns something", "feels satisfied", "gets tired", "makes progress"],
    ),
    (
        RelationName::XWant,
        &["to continue", "to tell someone", "to rest", "to share the result"],
    ),
    (
        RelationName::XReact,
        &["happy", "relieved", "satisfied", "proud"],
    ),
    (
        RelationName::OReact,
        &["interested", "grateful", "surprised"],
    ),
    (
        RelationName::OWant,
        &["to respond", "to help", "to know more"],
    ),
    (
        RelationName::OEffect,
        &["is affected", "learns something new", "gets involved"],
    ),
];

/// Deterministic backend for tests and offline runs.
///
/// Each (sentence, relation) gets three phrases from a fixed pool, rotated
/// by a hash of the sentence text. Explicit overrides take precedence.
#[derive(Debug, Clone, Default)]
pub struct StubKnowledgeBackend {
    overrides: HashMap<(String, RelationName), Vec<String>>,
}

impl StubKnowledgeBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixes the beams returned for `sentence` and `relation`.
    pub fn with_beams(mut self, sentence: &str, relation: RelationName, beams: &[&str]) -> Self {
        self.overrides.insert(
            (collapse_ws(sentence), relation),
            beams.iter().map(|b| b.to_string()).collect(),
        );
        self
    }

    fn stable_hash(text: &str) -> u64 {
        let digest = Sha256::digest(text.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }
}

impl KnowledgeBackend for StubKnowledgeBackend {
    fn id(&self) -> &str {
        "stub"
    }

    fn infer(&self, discourse: &[String]) -> Result<CommonsenseBundle, KnowledgeError> {
        let mut inferences = BTreeMap::new();
        for (i, sentence) in discourse.iter().enumerate() {
            let sentence = collapse_ws(sentence);
            let h = Self::stable_hash(&sentence) as usize;
            for (relation, pool) in STUB_POOLS {
                let beams = match self.overrides.get(&(sentence.clone(), relation)) {
                    Some(b) => b.clone(),
                    None => (0..3).map(|k| pool[(h + k) % pool.len()].to_string()).collect(),
                };
                inferences.insert((i, relation), beams);
            }
        }
        let epoch = Utc.timestamp_opt(0, 0).unwrap();
        CommonsenseBundle::new(discourse.to_vec(), inferences, "stub", epoch)
    }
}
