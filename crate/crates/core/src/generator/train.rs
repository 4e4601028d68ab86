use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::lexical::{model_tokens, AlignedPair, CheckpointBackend, LexicalModel};
use super::GenerationError;
use crate::corpus::AbductivePair;
use crate::jsonl;
use crate::knowledge::sanitize_phrase;
use crate::sequencing::{build_decoder_target, build_encoder_input, split_sentences, InputSetting, MARKER};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EXAMPLES_FILE: &str = "examples.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Step size for gradient-based trainers. The in-crate EM trainer has no step size.
    pub learning_rate: f64,
    /// Batch size for gradient-based trainers. EM uses the full corpus per epoch.
    pub batch_size: usize,
    /// Recorded for provenance; EM training is deterministic.
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
}

impl TrainingConfig {
    pub fn new(checkpoint_dir: impl Into<PathBuf>) -> Self {
        TrainingConfig {
            epochs: 3,
            learning_rate: 3e-5,
            batch_size: 8,
            seed: 13,
            checkpoint_dir: checkpoint_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "epochs, learning_rate and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("knowledge map has no phrase for pair {0}")]
    KnowledgeGap(String),
    #[error("checkpoint directory {path} is not writable: {source}")]
    Unwritable { path: PathBuf, source: std::io::Error },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no pair produced a usable training example")]
    NoUsableExamples,
    #[error(transparent)]
    Load(#[from] GenerationError),
}

/// Encoder/decoder strings for one abductive pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub encoder_input: String,
    pub decoder_target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub config: TrainingConfig,
    pub corpus_sha256: String,
    pub created_at: DateTime<Utc>,
    /// Mean negative log-likelihood per hypothesis token, one entry per epoch.
    pub loss: Vec<f64>,
    pub corpus_size: usize,
    pub examples_used: usize,
    pub skipped: Vec<SkippedPair>,
    pub input_setting: InputSetting,
    pub trainer: String,
}

impl TrainingManifest {
    pub fn load(dir: &Path) -> Result<Self, GenerationError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| GenerationError::Backend(format!("{}: {e}", path.display())))
    }
}

/// Hex sha256 over the pairs serialized as JSON lines, in order.
pub fn corpus_sha256(pairs: &[AbductivePair]) -> String {
    let mut hasher = Sha256::new();
    for p in pairs {
        hasher.update(serde_json::to_vec(p).expect("pairs serialize"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

fn check_coverage(pairs: &[AbductivePair], knowledge: Option<&BTreeMap<String, String>>) -> Result<(), TrainError> {
    if let Some(map) = knowledge {
        if let Some(p) = pairs.iter().find(|p| !map.contains_key(&p.id)) {
            return Err(TrainError::KnowledgeGap(p.id.clone()));
        }
    }
    Ok(())
}

/// Builds encoder inputs and decoder targets. Pairs whose text cannot form
/// a valid example are returned separately with the reason.
pub fn build_training_examples(
    pairs: &[AbductivePair],
    knowledge: Option<&BTreeMap<String, String>>,
) -> Result<(Vec<TrainingExample>, Vec<SkippedPair>), TrainError> {
    check_coverage(pairs, knowledge)?;
    let mut examples = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    for p in pairs {
        let phrase = knowledge.map(|m| sanitize_phrase(&m[&p.id]));
        let built = build_encoder_input(&p.obs1, &p.obs2, phrase.as_deref())
            .and_then(|input| Ok((input, build_decoder_target(&p.obs1, &p.hypothesis, &p.obs2)?)));
        match built {
            Ok((input, target)) => examples.push(TrainingExample {
                id: p.id.clone(),
                encoder_input: input.text().to_string(),
                decoder_target: target.into_string(),
            }),
            Err(e) => skipped.push(SkippedPair { id: p.id.clone(), reason: e.to_string() }),
        }
    }
    Ok((examples, skipped))
}

fn aligned(example: &TrainingExample) -> AlignedPair {
    let sentences = split_sentences(&example.decoder_target);
    let middle = sentences[1].strip_prefix(MARKER).unwrap_or(&sentences[1]);
    (model_tokens(&example.encoder_input), model_tokens(middle))
}

fn writable_dir(dir: &Path) -> Result<(), TrainError> {
    let wrap = |source| TrainError::Unwritable { path: dir.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(wrap)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(wrap)?;
    fs::remove_file(&probe).map_err(wrap)
}

/// Trains a checkpoint on `pairs` and returns a loaded backend for it.
///
/// With `knowledge`, every pair id needs a phrase and the model is trained
/// on knowledge-augmented inputs. The checkpoint directory receives
/// `weights.json`, `examples.jsonl` and `manifest.json`.
pub fn fine_tune(
    pairs: &[AbductivePair],
    knowledge: Option<&BTreeMap<String, String>>,
    config: &TrainingConfig,
) -> Result<CheckpointBackend, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    check_coverage(pairs, knowledge)?;
    let dir = &config.checkpoint_dir;
    writable_dir(dir)?;

    let (examples, skipped) = build_training_examples(pairs, knowledge)?;
    if examples.is_empty() {
        return Err(TrainError::NoUsableExamples);
    }
    for s in &skipped {
        log::warn!("skipping pair {}: {}", s.id, s.reason);
    }
    let input_setting = if knowledge.is_some() { InputSetting::Knowledge } else { InputSetting::Plain };
    let aligned: Vec<AlignedPair> = examples.iter().map(aligned).collect();
    let (model, loss) = LexicalModel::train(&aligned, config.epochs, input_setting);
    log::info!("trained on {} examples; loss per epoch {loss:?}", examples.len());

    let io = |source| TrainError::Unwritable { path: dir.clone(), source };
    model.save(dir).map_err(io)?;
    jsonl::write_all(&dir.join(EXAMPLES_FILE), &examples).map_err(io)?;
    let manifest = TrainingManifest {
        config: config.clone(),
        corpus_sha256: corpus_sha256(pairs),
        created_at: Utc::now(),
        loss,
        corpus_size: pairs.len(),
        examples_used: examples.len(),
        skipped,
        input_setting,
        trainer: "lexical-ibm1-bigram".into(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| io(std::io::Error::other(e)))?;
    fs::write(dir.join(MANIFEST_FILE), json).map_err(io)?;
    Ok(CheckpointBackend::open(dir)?)
}
