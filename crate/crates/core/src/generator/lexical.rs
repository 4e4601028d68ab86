//! A small lexical sequence-to-sequence model that trains on a laptop.
//!
//! The decoder copies both observations from the encoder input and generates
//! the linking sentence word by word. Each word is drawn from a mixture of an
//! IBM Model 1 translation table (source words to hypothesis words, trained
//! with EM) and an interpolated bigram language model over hypotheses.
//! Decoding is beam search; there is no sampling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GenerationBackend, GenerationConfig, GenerationError, Setting};
use crate::sequencing::{build_decoder_target, EncoderInput, InputSetting, Segments};

pub const WEIGHTS_FILE: &str = "weights.json";

const FORMAT_VERSION: u32 = 1;
const NULL: &str = "<null>";
const START: &str = "<s>";
const END: &str = "</s>";
/// Translation entries kept per source word after training.
const KEEP_PER_SOURCE: usize = 24;
const MIN_TRANSLATION_PROB: f64 = 1e-3;
/// Candidate words scored at each decoding step.
const CANDIDATES: usize = 48;
const MAX_HYPOTHESIS_TOKENS: usize = 30;
const MIN_HYPOTHESIS_TOKENS: usize = 2;
const MAX_TOKEN_REPEATS: usize = 2;

/// Case-preserving word tokens with surrounding punctuation removed.
pub fn model_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty() && *w != "SEP" && *w != "MASK")
        .map(str::to_string)
        .collect()
}

/// Source word -> most probable target words with t(target | source).
type TranslationTable = BTreeMap<String, Vec<(String, f64)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Weights {
    format_version: u32,
    input_setting: InputSetting,
    lm_weight: f64,
    bigram_weight: f64,
    /// source word -> [(hypothesis word, t(e|f))], best first
    translation: TranslationTable,
    unigram: BTreeMap<String, u64>,
    /// previous word -> [(next word, count)]
    bigram: BTreeMap<String, Vec<(String, u64)>>,
}

/// Trained model plus lookup tables built from its weights.
#[derive(Debug, Clone)]
pub struct LexicalModel {
    weights: Weights,
    translation: HashMap<String, HashMap<String, f64>>,
    bigram: HashMap<String, HashMap<String, u64>>,
    bigram_totals: HashMap<String, u64>,
    unigram_total: u64,
}

/// One training pair for [`LexicalModel::train`]: source words, hypothesis words.
pub type AlignedPair = (Vec<String>, Vec<String>);

struct Interner {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl Interner {
    fn new(seed: &[&str]) -> Self {
        let mut i = Interner { ids: HashMap::new(), words: Vec::new() };
        for w in seed {
            i.id(w);
        }
        i
    }

    fn id(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_string(), id);
        self.words.push(w.to_string());
        id
    }
}

/// IBM Model 1 by EM. Returns the pruned table and the per-epoch mean
/// negative log-likelihood per hypothesis token, measured before each update.
fn train_ibm1(
    pairs: &[AlignedPair],
    epochs: usize,
) -> (TranslationTable, Vec<f64>) {
    let mut src_vocab = Interner::new(&[NULL]);
    let mut tgt_vocab = Interner::new(&[]);
    let sentences: Vec<(Vec<u32>, Vec<u32>)> = pairs
        .iter()
        .map(|(src, tgt)| {
            let mut s = vec![0];
            s.extend(src.iter().map(|w| src_vocab.id(w)));
            let mut t: Vec<u32> = tgt.iter().map(|w| tgt_vocab.id(w)).collect();
            t.push(tgt_vocab.id(END));
            (s, t)
        })
        .collect();

    let mut cooc: Vec<Vec<u32>> = vec![Vec::new(); src_vocab.words.len()];
    for (s, t) in &sentences {
        for &f in s {
            cooc[f as usize].extend_from_slice(t);
        }
    }
    for list in &mut cooc {
        list.sort_unstable();
        list.dedup();
    }
    let mut t: Vec<Vec<f64>> = cooc.iter().map(|l| vec![1.0 / l.len().max(1) as f64; l.len()]).collect();
    let position = |f: u32, e: u32| cooc[f as usize].binary_search(&e).expect("co-occurring pair");

    let mut loss = Vec::with_capacity(epochs);
    let mut probs = Vec::new();
    for _ in 0..epochs {
        let mut counts: Vec<Vec<f64>> = cooc.iter().map(|l| vec![0.0; l.len()]).collect();
        let (mut nll, mut n_tokens) = (0.0, 0usize);
        for (s, tgt) in &sentences {
            for &e in tgt {
                probs.clear();
                probs.extend(s.iter().map(|&f| {
                    let i = position(f, e);
                    (i, t[f as usize][i])
                }));
                let denom: f64 = probs.iter().map(|(_, p)| p).sum();
                nll -= (denom / s.len() as f64).ln();
                n_tokens += 1;
                for (&f, &(i, p)) in s.iter().zip(&probs) {
                    counts[f as usize][i] += p / denom;
                }
            }
        }
        loss.push(nll / n_tokens.max(1) as f64);
        for (row, c) in t.iter_mut().zip(&counts) {
            let total: f64 = c.iter().sum();
            if total > 0.0 {
                for (p, x) in row.iter_mut().zip(c) {
                    *p = x / total;
                }
            }
        }
    }

    let mut table = BTreeMap::new();
    for (f, (targets, row)) in cooc.iter().zip(&t).enumerate() {
        let mut entries: Vec<(String, f64)> = targets
            .iter()
            .zip(row)
            .filter(|(_, p)| **p >= MIN_TRANSLATION_PROB)
            .map(|(&e, &p)| (tgt_vocab.words[e as usize].clone(), p))
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(KEEP_PER_SOURCE);
        if !entries.is_empty() {
            table.insert(src_vocab.words[f].clone(), entries);
        }
    }
    (table, loss)
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<String>,
    log_prob: f64,
}

impl Hypothesis {
    fn normalized(&self) -> f64 {
        self.log_prob / (self.tokens.len() + 1) as f64
    }

    fn allows(&self, word: &str) -> bool {
        let repeats = self.tokens.iter().filter(|t| *t == word).count();
        if repeats >= MAX_TOKEN_REPEATS {
            return false;
        }
        match self.tokens.last() {
            Some(prev) if prev == word => false,
            Some(prev) => !self
                .tokens
                .windows(2)
                .any(|w| w[0] == *prev && w[1] == word),
            None => true,
        }
    }
}

fn by_score_then_tokens(a: &Hypothesis, b: &Hypothesis, score: fn(&Hypothesis) -> f64) -> Ordering {
    score(b).total_cmp(&score(a)).then_with(|| a.tokens.cmp(&b.tokens))
}

impl LexicalModel {
    /// Trains on aligned pairs for `epochs` EM iterations and returns the
    /// model with its loss curve.
    pub fn train(pairs: &[AlignedPair], epochs: usize, input_setting: InputSetting) -> (Self, Vec<f64>) {
        let (translation, loss) = train_ibm1(pairs, epochs);
        let mut unigram = BTreeMap::new();
        let mut bigram: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for (_, tgt) in pairs {
            let seq: Vec<&str> = std::iter::once(START)
                .chain(tgt.iter().map(String::as_str))
                .chain(std::iter::once(END))
                .collect();
            for w in &seq[1..] {
                *unigram.entry(w.to_string()).or_insert(0) += 1;
            }
            for w in seq.windows(2) {
                *bigram
                    .entry(w[0].to_string())
                    .or_default()
                    .entry(w[1].to_string())
                    .or_insert(0) += 1;
            }
        }
        let bigram = bigram
            .into_iter()
            .map(|(prev, next)| {
                let mut v: Vec<(String, u64)> = next.into_iter().collect();
                v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                (prev, v)
            })
            .collect();
        let weights = Weights {
            format_version: FORMAT_VERSION,
            input_setting,
            lm_weight: 0.5,
            bigram_weight: 0.8,
            translation,
            unigram,
            bigram,
        };
        (Self::from_weights(weights), loss)
    }

    fn from_weights(weights: Weights) -> Self {
        let translation = weights
            .translation
            .iter()
            .map(|(f, es)| (f.clone(), es.iter().cloned().collect()))
            .collect();
        let bigram: HashMap<String, HashMap<String, u64>> = weights
            .bigram
            .iter()
            .map(|(p, ns)| (p.clone(), ns.iter().cloned().collect()))
            .collect();
        let bigram_totals = bigram.iter().map(|(p, ns)| (p.clone(), ns.values().sum())).collect();
        let unigram_total = weights.unigram.values().sum();
        LexicalModel { weights, translation, bigram, bigram_totals, unigram_total }
    }

    pub fn input_setting(&self) -> InputSetting {
        self.weights.input_setting
    }

    pub fn vocabulary_size(&self) -> usize {
        self.weights.unigram.len()
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(WEIGHTS_FILE);
        let json = serde_json::to_vec(&self.weights).map_err(std::io::Error::other)?;
        fs::write(&path, json)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, GenerationError> {
        let path = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&path)?;
        let weights: Weights = serde_json::from_slice(&bytes)
            .map_err(|e| GenerationError::Backend(format!("{}: {e}", path.display())))?;
        if weights.format_version != FORMAT_VERSION {
            return Err(GenerationError::Backend(format!(
                "{}: unsupported format version {}",
                path.display(),
                weights.format_version
            )));
        }
        Ok(Self::from_weights(weights))
    }

    fn translation_prob(&self, word: &str, source: &[String]) -> f64 {
        let t = |f: &str| self.translation.get(f).and_then(|m| m.get(word)).copied().unwrap_or(0.0);
        let sum: f64 = t(NULL) + source.iter().map(|f| t(f)).sum::<f64>();
        sum / (source.len() + 1) as f64
    }

    fn lm_prob(&self, word: &str, prev: &str) -> f64 {
        let vocab = self.weights.unigram.len() as f64;
        let unigram = (self.weights.unigram.get(word).copied().unwrap_or(0) as f64 + 1.0)
            / (self.unigram_total as f64 + vocab + 1.0);
        let bigram = match self.bigram_totals.get(prev) {
            Some(&total) if total > 0 => {
                self.bigram.get(prev).and_then(|m| m.get(word)).copied().unwrap_or(0) as f64 / total as f64
            }
            _ => unigram,
        };
        let mu = self.weights.bigram_weight;
        mu * bigram + (1.0 - mu) * unigram
    }

    /// P(word | previous word, source words).
    pub fn word_prob(&self, word: &str, prev: &str, source: &[String]) -> f64 {
        let lambda = self.weights.lm_weight;
        lambda * self.lm_prob(word, prev) + (1.0 - lambda) * self.translation_prob(word, source)
    }

    fn candidates(&self, prev: &str, source: &[String]) -> Vec<String> {
        let mut pool: HashSet<&str> = HashSet::new();
        for f in source.iter().map(String::as_str).chain(std::iter::once(NULL)) {
            if let Some(es) = self.weights.translation.get(f) {
                pool.extend(es.iter().map(|(e, _)| e.as_str()));
            }
        }
        if let Some(ns) = self.weights.bigram.get(prev) {
            pool.extend(ns.iter().take(CANDIDATES).map(|(n, _)| n.as_str()));
        }
        pool.insert(END);
        let mut scored: Vec<(&str, f64)> = pool.into_iter().map(|w| (w, self.word_prob(w, prev, source))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        scored.truncate(CANDIDATES);
        scored.into_iter().map(|(w, _)| w.to_string()).collect()
    }

    /// Beam search for the hypothesis words given the source words.
    pub fn decode(&self, source: &[String], beam_width: usize, max_tokens: usize) -> Vec<String> {
        let max_tokens = max_tokens.clamp(MIN_HYPOTHESIS_TOKENS, MAX_HYPOTHESIS_TOKENS);
        let beam_width = beam_width.max(1);
        let mut beam = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0 }];
        let mut finished: Vec<Hypothesis> = Vec::new();
        for step in 0..=max_tokens {
            let mut expanded = Vec::new();
            for hyp in &beam {
                let prev = hyp.tokens.last().map_or(START, String::as_str);
                for word in self.candidates(prev, source) {
                    let ends = word == END;
                    if ends && step < MIN_HYPOTHESIS_TOKENS || !ends && (step == max_tokens || !hyp.allows(&word)) {
                        continue;
                    }
                    let p = self.word_prob(&word, prev, source);
                    let next = Hypothesis {
                        log_prob: hyp.log_prob + p.ln(),
                        tokens: if ends { hyp.tokens.clone() } else { [hyp.tokens.clone(), vec![word]].concat() },
                    };
                    if ends {
                        finished.push(next);
                    } else {
                        expanded.push(next);
                    }
                }
            }
            expanded.sort_by(|a, b| by_score_then_tokens(a, b, |h| h.log_prob));
            expanded.truncate(beam_width);
            beam = expanded;
            if beam.is_empty() || finished.len() >= beam_width {
                break;
            }
        }
        if finished.is_empty() {
            finished = beam;
        }
        finished.sort_by(|a, b| by_score_then_tokens(a, b, Hypothesis::normalized));
        finished.into_iter().next().map(|h| h.tokens).unwrap_or_default()
    }
}

/// Backend over a checkpoint directory written by [`super::fine_tune`].
#[derive(Debug)]
pub struct CheckpointBackend {
    dir: PathBuf,
    model: Option<LexicalModel>,
    max_input_tokens: usize,
}

impl CheckpointBackend {
    /// A handle for `dir`; nothing is read until [`CheckpointBackend::load`].
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointBackend { dir: dir.into(), model: None, max_input_tokens: 1024 }
    }

    /// Opens and loads `dir` in one step.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GenerationError> {
        let mut backend = Self::new(dir);
        backend.load()?;
        Ok(backend)
    }

    pub fn from_model(dir: impl Into<PathBuf>, model: LexicalModel) -> Self {
        CheckpointBackend { dir: dir.into(), model: Some(model), max_input_tokens: 1024 }
    }

    pub fn load(&mut self) -> Result<(), GenerationError> {
        self.model = Some(LexicalModel::load(&self.dir)?);
        Ok(())
    }

    pub fn is_loaded(&self) -> bool {
        self.model.is_some()
    }

    pub fn model(&self) -> Option<&LexicalModel> {
        self.model.as_ref()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl GenerationBackend for CheckpointBackend {
    fn id(&self) -> String {
        format!("checkpoint:{}", self.dir.display())
    }

    fn supports(&self, setting: Setting) -> bool {
        match &self.model {
            Some(m) => m.input_setting() == setting.input_setting(),
            None => setting != Setting::ZeroShot,
        }
    }

    fn generate(&mut self, input: &EncoderInput, config: &GenerationConfig) -> Result<String, GenerationError> {
        let model = self.model.as_ref().ok_or_else(|| GenerationError::NotLoaded(self.id()))?;
        if input.setting() != config.setting.input_setting() {
            return Err(GenerationError::InputMismatch { found: input.setting(), setting: config.setting });
        }
        if input.setting() != model.input_setting() {
            return Err(GenerationError::Incompatible { backend: self.id(), setting: config.setting });
        }
        let length = input.text().split_whitespace().count();
        if length > self.max_input_tokens {
            return Err(GenerationError::InputTooLong { length, limit: self.max_input_tokens });
        }
        let (first, second) = match input.segments() {
            Segments::Plain { first, second } | Segments::Knowledge { first, second, .. } => (first, second),
            Segments::ZeroShot { .. } => unreachable!("checked against the model setting"),
        };
        let source = model_tokens(input.text());
        let words = model.decode(&source, config.beam_width, config.max_output_tokens);
        if words.is_empty() {
            return Err(GenerationError::Backend("decoder produced no words".into()));
        }
        let target = build_decoder_target(first, &words.join(" "), second)
            .map_err(|e| GenerationError::Backend(e.to_string()))?;
        Ok(target.into_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(src: &str, tgt: &str) -> AlignedPair {
        (model_tokens(src), model_tokens(tgt))
    }

    fn toy() -> Vec<AlignedPair> {
        vec![
            pair("Amy was hungry. She ate a sandwich.", "Amy made food"),
            pair("Tom was hungry. He ate pasta.", "Tom made food"),
            pair("Amy was tired. She slept well.", "Amy went to bed"),
            pair("Tom was tired. He slept late.", "Tom went to bed"),
        ]
    }

    #[test]
    fn loss_never_increases() {
        let (_, loss) = LexicalModel::train(&toy(), 6, InputSetting::Plain);
        assert_eq!(loss.len(), 6);
        for w in loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{loss:?}");
        }
    }

    #[test]
    fn decodes_a_plausible_bridge() {
        let (model, _) = LexicalModel::train(&toy(), 5, InputSetting::Plain);
        let out = model.decode(&model_tokens("Amy was hungry. She ate a sandwich."), 5, 16);
        assert!(out.len() >= MIN_HYPOTHESIS_TOKENS);
        assert!(out.contains(&"food".to_string()), "{out:?}");
    }

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (model, _) = LexicalModel::train(&toy(), 2, InputSetting::Knowledge);
        model.save(dir.path()).unwrap();
        let loaded = LexicalModel::load(dir.path()).unwrap();
        assert_eq!(loaded.input_setting(), InputSetting::Knowledge);
        let src = model_tokens("Tom was tired.");
        assert_eq!(model.decode(&src, 5, 10), loaded.decode(&src, 5, 10));
    }

    #[test]
    fn unloaded_backend_refuses() {
        let mut backend = CheckpointBackend::new("/nonexistent");
        let input = crate::sequencing::build_encoder_input("A b.", "C d.", None).unwrap();
        assert!(matches!(
            backend.generate(&input, &GenerationConfig::new(Setting::FineTuned)),
            Err(GenerationError::NotLoaded(_))
        ));
        assert!(backend.load().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let (model, _) = LexicalModel::train(&toy(), 3, InputSetting::Plain);
        let mut backend = CheckpointBackend::from_model("mem", model);
        let input = crate::sequencing::build_encoder_input("Amy was hungry.", "She ate a sandwich.", None).unwrap();
        let cfg = GenerationConfig::new(Setting::FineTuned);
        let a = backend.generate(&input, &cfg).unwrap();
        assert_eq!(a, backend.generate(&input, &cfg).unwrap());
        assert!(a.starts_with("Amy was hungry. And since "), "{a}");
        assert!(!backend.supports(Setting::ZeroShot));
    }
}
