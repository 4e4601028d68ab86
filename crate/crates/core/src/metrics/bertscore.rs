//! Greedy-matching BERTScore over per-token embeddings.
//!
//! No idf weighting and no baseline rescaling. Cosine similarities below
//! zero are clamped to zero.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MetricsError, TokenSequence};

/// Environment variable naming the contextual embedding server.
pub const EMBEDDER_URL_ENV: &str = "EMBEDDER_BACKEND_URL";

/// Maps a token sequence to one vector per token.
pub trait Embedder {
    fn id(&self) -> &str;

    fn embed(&self, tokens: &TokenSequence) -> Result<Vec<Vec<f64>>, MetricsError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity clamped to `[0, 1]`; zero vectors score 0.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // rounding would otherwise leave identical vectors a hair below 1
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

fn check_dims(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<(), MetricsError> {
    let mut dims = candidate.iter().chain(reference).map(Vec::len);
    let first = dims.next().unwrap_or(0);
    if first == 0 {
        return Err(MetricsError::DimensionMismatch { expected: 1, found: 0 });
    }
    if let Some(found) = dims.find(|&d| d != first) {
        return Err(MetricsError::DimensionMismatch { expected: first, found });
    }
    Ok(())
}

/// Greedy matching on precomputed embeddings.
pub fn greedy_match(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<BertScore, MetricsError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    check_dims(candidate, reference)?;
    let sim: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| reference.iter().map(|r| clamped_cosine(c, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(0.0, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BertScore { precision, recall, f1 })
}

pub fn bertscore(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    embedder: &dyn Embedder,
) -> Result<BertScore, MetricsError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let c = embedder.embed(candidate)?;
    let r = embedder.embed(reference)?;
    if c.len() != candidate.len() || r.len() != reference.len() {
        return Err(MetricsError::Embedder(format!(
            "{} returned the wrong number of vectors",
            embedder.id()
        )));
    }
    greedy_match(&c, &r)
}

pub fn bertscore_f1(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    embedder: &dyn Embedder,
) -> Result<f64, MetricsError> {
    bertscore(candidate, reference, embedder).map(|s| s.f1)
}

/// Context-free embedder built from hashed token and character-trigram features.
///
/// Deterministic on every platform. Tokens sharing trigrams get similar
/// vectors, so inflections score above unrelated words.
#[derive(Debug, Clone)]
pub struct StaticEmbedder {
    dim: usize,
}

impl Default for StaticEmbedder {
    fn default() -> Self {
        StaticEmbedder { dim: 64 }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StaticEmbedder {
    pub fn new(dim: usize) -> Self {
        StaticEmbedder { dim: dim.max(1) }
    }

    fn add_feature(&self, out: &mut [f64], feature: &str, weight: f64) {
        let mut state = fnv1a(feature.as_bytes());
        for x in out.iter_mut() {
            let u = (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64;
            *x += weight * (2.0 * u - 1.0);
        }
    }

    pub fn embed_token(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.add_feature(&mut v, &format!("w:{token}"), 1.0);
        let padded: Vec<char> = format!("<{token}>").chars().collect();
        for tri in padded.windows(3) {
            let tri: String = tri.iter().collect();
            self.add_feature(&mut v, &format!("c:{tri}"), 0.5);
        }
        v
    }
}

impl Embedder for StaticEmbedder {
    fn id(&self) -> &str {
        "static"
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<Vec<Vec<f64>>, MetricsError> {
        Ok(tokens.tokens().iter().map(|t| self.embed_token(t)).collect())
    }
}

/// Fixed token→vector table; unknown tokens are an error.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    table: HashMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, token: &str, vector: &[f64]) -> Self {
        self.table.insert(token.to_string(), vector.to_vec());
        self
    }
}

impl Embedder for TableEmbedder {
    fn id(&self) -> &str {
        "table"
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<Vec<Vec<f64>>, MetricsError> {
        tokens
            .tokens()
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| MetricsError::Embedder(format!("no vector for token {t:?}")))
            })
            .collect()
    }
}

/// Client for a contextual embedding server:
/// `POST {"tokens": [...]}` → `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>) -> Result<Self, MetricsError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| MetricsError::Embedder(e.to_string()))?;
        Ok(HttpEmbedder { url: url.into(), client })
    }

    pub fn from_env() -> Result<Self, MetricsError> {
        let url = std::env::var(EMBEDDER_URL_ENV)
            .map_err(|_| MetricsError::Embedder(format!("{EMBEDDER_URL_ENV} is not set")))?;
        Self::new(url)
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.url
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<Vec<Vec<f64>>, MetricsError> {
        let response = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { tokens: tokens.tokens() })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| MetricsError::Embedder(e.to_string()))?;
        let body: EmbedResponse = response.json().map_err(|e| MetricsError::Embedder(e.to_string()))?;
        Ok(body.vectors)
    }
}
