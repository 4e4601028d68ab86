//! Generation backends and the premise-generation pipeline.
//!
//! Three backend families implement [`GenerationBackend`]:
//!
//! * [`StubBackend`] echoes a fixed premise; it makes the pipeline testable without a model.
//! * [`CheckpointBackend`] loads a checkpoint written by [`fine_tune`].
//! * [`RemoteBackend`] talks to an external model server (for a large pre-trained
//!   or fine-tuned sequence-to-sequence model).
//!
//! [`generate_for_corpus`] builds the setting-specific encoder input for each
//! enthymeme, decodes it and extracts the implicit premise.

mod lexical;
mod remote;
mod stub;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Enthymeme;
use crate::knowledge::{self, KnowledgeBackend};
use crate::sequencing::{
    self, build_encoder_input, build_zero_shot_prompt_with_mask, EncoderInput, InputSetting, SEP,
};

pub use lexical::{CheckpointBackend, LexicalModel, WEIGHTS_FILE};
pub use remote::{RemoteBackend, GENERATION_URL_ENV};
pub use stub::StubBackend;
pub use train::{
    build_training_examples, corpus_sha256, fine_tune, TrainError, TrainingConfig, TrainingExample,
    TrainingManifest, EXAMPLES_FILE, MANIFEST_FILE,
};

/// Which of the three model settings produced (or will produce) a premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    ZeroShot,
    FineTuned,
    FineTunedKnowledge,
}

impl Setting {
    pub fn input_setting(self) -> InputSetting {
        match self {
            Setting::ZeroShot => InputSetting::ZeroShot,
            Setting::FineTuned => InputSetting::Plain,
            Setting::FineTunedKnowledge => InputSetting::Knowledge,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::ZeroShot => "zero_shot",
            Setting::FineTuned => "fine_tuned",
            Setting::FineTunedKnowledge => "fine_tuned_knowledge",
        })
    }
}

impl FromStr for Setting {
    type Err = GenerationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(Setting::ZeroShot),
            "fine_tuned" => Ok(Setting::FineTuned),
            "fine_tuned_knowledge" => Ok(Setting::FineTunedKnowledge),
            _ => Err(GenerationError::InvalidConfig(format!("unknown setting {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    pub setting: Setting,
    #[serde(default = "default_mask_literal")]
    pub mask_literal: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_beam_width() -> usize {
    5
}

fn default_max_output_tokens() -> usize {
    64
}

fn default_mask_literal() -> String {
    sequencing::DEFAULT_MASK.to_string()
}

impl GenerationConfig {
    pub fn new(setting: Setting) -> Self {
        GenerationConfig {
            beam_width: default_beam_width(),
            max_output_tokens: default_max_output_tokens(),
            setting,
            mask_literal: default_mask_literal(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.beam_width == 0 {
            return Err(GenerationError::InvalidConfig("beam_width must be at least 1".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(GenerationError::InvalidConfig(
                "max_output_tokens must be at least 1".into(),
            ));
        }
        if self.mask_literal.trim().is_empty() || self.mask_literal.contains(SEP) {
            return Err(GenerationError::InvalidConfig(format!(
                "unusable mask literal {:?}",
                self.mask_literal
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("backend {0} is not loaded")]
    NotLoaded(String),
    #[error("input of {length} tokens exceeds the backend context of {limit}")]
    InputTooLong { length: usize, limit: usize },
    #[error("backend {backend} cannot serve setting {setting}")]
    Incompatible { backend: String, setting: Setting },
    #[error("input format {found:?} does not match setting {setting}")]
    InputMismatch { found: InputSetting, setting: Setting },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Sequencing(#[from] sequencing::SequencingError),
    #[error(transparent)]
    Knowledge(#[from] knowledge::KnowledgeError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A sequence-to-sequence model that decodes an encoder input into surface text.
///
/// Handles are single-threaded; run several handles for parallel decoding.
pub trait GenerationBackend {
    fn id(&self) -> String;

    fn supports(&self, setting: Setting) -> bool;

    /// Decodes `input` with beam search. Identical input and config give identical output.
    fn generate(&mut self, input: &EncoderInput, config: &GenerationConfig) -> Result<String, GenerationError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn supports(&self, setting: Setting) -> bool {
        (**self).supports(setting)
    }

    fn generate(&mut self, input: &EncoderInput, config: &GenerationConfig) -> Result<String, GenerationError> {
        (**self).generate(input, config)
    }
}

/// Generated argument and the premise extracted from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPremise {
    pub enthymeme_id: String,
    pub setting: Setting,
    pub full_argument: String,
    pub implicit_premise: String,
    pub extraction_fallback: bool,
}

/// Sentinel written in place of a premise when one item fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub enthymeme_id: String,
    pub setting: Setting,
    pub error: String,
}

/// One line of a generation output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenerationRecord {
    Generated(GeneratedPremise),
    Failed(GenerationFailure),
}

impl GenerationRecord {
    pub fn enthymeme_id(&self) -> &str {
        match self {
            GenerationRecord::Generated(g) => &g.enthymeme_id,
            GenerationRecord::Failed(f) => &f.enthymeme_id,
        }
    }

    pub fn setting(&self) -> Setting {
        match self {
            GenerationRecord::Generated(g) => g.setting,
            GenerationRecord::Failed(f) => f.setting,
        }
    }

    pub fn premise(&self) -> Option<&GeneratedPremise> {
        match self {
            GenerationRecord::Generated(g) => Some(g),
            GenerationRecord::Failed(_) => None,
        }
    }
}

/// Where the knowledge setting takes its commonsense phrase from.
#[derive(Clone, Copy)]
pub enum KnowledgeSource<'a> {
    /// Query a backend over `[stated_premise, stated_claim]` for each item.
    Backend(&'a dyn KnowledgeBackend),
    /// Use the `knowledge_phrase` already attached to each enthymeme.
    Attached,
}

fn knowledge_phrase(item: &Enthymeme, source: KnowledgeSource<'_>) -> Result<String, GenerationError> {
    match source {
        KnowledgeSource::Attached => item.knowledge_phrase.clone().ok_or_else(|| {
            GenerationError::InvalidConfig(format!("enthymeme {} has no knowledge_phrase", item.id))
        }),
        KnowledgeSource::Backend(backend) => {
            let discourse = vec![item.stated_premise.clone(), item.stated_claim.clone()];
            let bundle = knowledge::infer(&discourse, backend)?;
            Ok(knowledge::select_intent(&bundle)?)
        }
    }
}

/// Encoder input for one enthymeme under `config.setting`.
pub fn build_input(
    item: &Enthymeme,
    config: &GenerationConfig,
    knowledge: Option<KnowledgeSource<'_>>,
) -> Result<EncoderInput, GenerationError> {
    let input = match config.setting {
        Setting::ZeroShot => {
            build_zero_shot_prompt_with_mask(&item.stated_premise, &item.stated_claim, &config.mask_literal)?
        }
        Setting::FineTuned => build_encoder_input(&item.stated_premise, &item.stated_claim, None)?,
        Setting::FineTunedKnowledge => {
            let source = knowledge.ok_or_else(|| {
                GenerationError::InvalidConfig("knowledge setting needs a knowledge source".into())
            })?;
            let phrase = knowledge::sanitize_phrase(&knowledge_phrase(item, source)?);
            build_encoder_input(&item.stated_premise, &item.stated_claim, Some(&phrase))?
        }
    };
    Ok(input)
}

fn generate_one(
    item: &Enthymeme,
    backend: &mut dyn GenerationBackend,
    config: &GenerationConfig,
    knowledge: Option<KnowledgeSource<'_>>,
) -> Result<GeneratedPremise, GenerationError> {
    let input = build_input(item, config, knowledge)?;
    let full_argument = backend.generate(&input, config)?;
    let extraction = sequencing::extract_implicit_premise_in_context(
        &full_argument,
        &item.stated_premise,
        &item.stated_claim,
    )?;
    Ok(GeneratedPremise {
        enthymeme_id: item.id.clone(),
        setting: config.setting,
        full_argument,
        implicit_premise: extraction.premise,
        extraction_fallback: extraction.fallback,
    })
}

fn check_preconditions(
    backend: &dyn GenerationBackend,
    config: &GenerationConfig,
    knowledge: Option<KnowledgeSource<'_>>,
) -> Result<(), GenerationError> {
    config.validate()?;
    if !backend.supports(config.setting) {
        return Err(GenerationError::Incompatible {
            backend: backend.id(),
            setting: config.setting,
        });
    }
    match (config.setting, knowledge.is_some()) {
        (Setting::FineTunedKnowledge, false) => Err(GenerationError::InvalidConfig(
            "setting fine_tuned_knowledge requires a knowledge source".into(),
        )),
        (Setting::ZeroShot | Setting::FineTuned, true) => Err(GenerationError::InvalidConfig(format!(
            "setting {} does not take a knowledge source",
            config.setting
        ))),
        _ => Ok(()),
    }
}

/// Generates one record per enthymeme, in input order.
///
/// Configuration problems fail the whole call; failures of a single item
/// (knowledge lookup, decoding, extraction) become [`GenerationRecord::Failed`].
pub fn generate_for_corpus(
    enthymemes: &[Enthymeme],
    backend: &mut dyn GenerationBackend,
    config: &GenerationConfig,
    knowledge: Option<KnowledgeSource<'_>>,
) -> Result<Vec<GenerationRecord>, GenerationError> {
    check_preconditions(backend, config, knowledge)?;
    Ok(enthymemes
        .iter()
        .map(|item| match generate_one(item, backend, config, knowledge) {
            Ok(g) => GenerationRecord::Generated(g),
            Err(e) => {
                log::warn!("generation failed for {}: {e}", item.id);
                GenerationRecord::Failed(GenerationFailure {
                    enthymeme_id: item.id.clone(),
                    setting: config.setting,
                    error: e.to_string(),
                })
            }
        })
        .collect())
}

/// Like [`generate_for_corpus`], with `workers` independent backend handles
/// built by `make_backend`, each decoding a contiguous chunk.
pub fn generate_for_corpus_parallel<F, B>(
    enthymemes: &[Enthymeme],
    make_backend: F,
    workers: usize,
    config: &GenerationConfig,
    knowledge: Option<KnowledgeSource<'_>>,
) -> Result<Vec<GenerationRecord>, GenerationError>
where
    F: Fn() -> Result<B, GenerationError> + Sync,
    B: GenerationBackend,
{
    let workers = workers.max(1);
    if enthymemes.is_empty() {
        let backend = make_backend()?;
        check_preconditions(&backend, config, knowledge)?;
        return Ok(Vec::new());
    }
    let chunk = enthymemes.len().div_ceil(workers);
    let results: Vec<Result<Vec<GenerationRecord>, GenerationError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = enthymemes
            .chunks(chunk)
            .map(|part| {
                let make_backend = &make_backend;
                scope.spawn(move || {
                    let mut backend = make_backend()?;
                    generate_for_corpus(part, &mut backend, config, knowledge)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(enthymemes.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestSet;
    use crate::knowledge::StubKnowledgeBackend;
    use std::collections::BTreeMap;

    pub(crate) fn enthymeme(id: &str, premise: &str, claim: &str) -> Enthymeme {
        Enthymeme {
            id: id.into(),
            stated_premise: premise.into(),
            stated_claim: claim.into(),
            gold_premises: vec!["Gold premise holds.".into()],
            source: TestSet::D1,
            scheme: None,
            raw_meta: BTreeMap::new(),
            knowledge_phrase: None,
        }
    }

    fn three() -> Vec<Enthymeme> {
        vec![
            enthymeme("a", "Vaccinations save lives", "Vaccination should be mandatory for all children"),
            enthymeme("b", "Deaf students need more specialized education", "States need special schools for the deaf"),
            enthymeme("c", "Understanding other culture is more important now than ever before", "Colleges need humanities programs"),
        ]
    }

    #[test]
    fn empty_corpus_gives_empty_output() {
        let out = generate_for_corpus(&[], &mut StubBackend::new(), &GenerationConfig::new(Setting::FineTuned), None)
            .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn stub_pipeline_over_three_items() {
        for setting in [Setting::ZeroShot, Setting::FineTuned] {
            let out = generate_for_corpus(&three(), &mut StubBackend::new(), &GenerationConfig::new(setting), None)
                .unwrap();
            assert_eq!(out.len(), 3);
            for (rec, item) in out.iter().zip(three()) {
                let g = rec.premise().unwrap();
                assert_eq!(g.enthymeme_id, item.id);
                assert_eq!(g.implicit_premise, "Stub.");
                assert!(!g.extraction_fallback);
                assert_eq!(g.setting, setting);
            }
        }
    }

    #[test]
    fn knowledge_setting_requires_source() {
        let cfg = GenerationConfig::new(Setting::FineTunedKnowledge);
        assert!(matches!(
            generate_for_corpus(&three(), &mut StubBackend::new(), &cfg, None),
            Err(GenerationError::InvalidConfig(_))
        ));
        let stub = StubKnowledgeBackend::new();
        let cfg = GenerationConfig::new(Setting::FineTuned);
        assert!(generate_for_corpus(&three(), &mut StubBackend::new(), &cfg, Some(KnowledgeSource::Backend(&stub)))
            .is_err());
    }

    #[test]
    fn knowledge_inputs_carry_two_delimiters() {
        let stub = StubKnowledgeBackend::new();
        let cfg = GenerationConfig::new(Setting::FineTunedKnowledge);
        for item in three() {
            let input = build_input(&item, &cfg, Some(KnowledgeSource::Backend(&stub))).unwrap();
            assert_eq!(input.text().matches(SEP).count(), 2);
        }
        let plain = build_input(&three()[0], &GenerationConfig::new(Setting::FineTuned), None).unwrap();
        assert_eq!(plain.text().matches(SEP).count(), 1);
    }

    #[test]
    fn missing_attached_phrase_fails_only_that_item() {
        let mut items = three();
        items[0].knowledge_phrase = Some("to be safe".into());
        items[2].knowledge_phrase = Some("to learn more".into());
        let cfg = GenerationConfig::new(Setting::FineTunedKnowledge);
        let out = generate_for_corpus(&items, &mut StubBackend::new(), &cfg, Some(KnowledgeSource::Attached)).unwrap();
        assert!(out[0].premise().is_some());
        assert!(matches!(&out[1], GenerationRecord::Failed(f) if f.enthymeme_id == "b"));
        assert!(out[2].premise().is_some());
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenerationConfig::new(Setting::FineTuned);
        assert_eq!(cfg.beam_width, 5);
        cfg.beam_width = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = GenerationConfig::new(Setting::FineTuned);
        cfg.max_output_tokens = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn records_round_trip_through_json() {
        let ok = GenerationRecord::Generated(GeneratedPremise {
            enthymeme_id: "a".into(),
            setting: Setting::FineTuned,
            full_argument: "A. And since b. C.".into(),
            implicit_premise: "B.".into(),
            extraction_fallback: false,
        });
        let failed = GenerationRecord::Failed(GenerationFailure {
            enthymeme_id: "b".into(),
            setting: Setting::FineTuned,
            error: "boom".into(),
        });
        for r in [ok, failed] {
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<GenerationRecord>(&json).unwrap(), r);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut items = Vec::new();
        for i in 0..7 {
            items.push(enthymeme(&format!("e{i}"), "Vaccinations save lives", "Vaccination should be mandatory"));
        }
        let cfg = GenerationConfig::new(Setting::FineTunedKnowledge);
        let stub = StubKnowledgeBackend::new();
        let seq = generate_for_corpus(&items, &mut StubBackend::new(), &cfg, Some(KnowledgeSource::Backend(&stub))).unwrap();
        let par = generate_for_corpus_parallel(&items, || Ok(StubBackend::new()), 3, &cfg, Some(KnowledgeSource::Backend(&stub)))
            .unwrap();
        assert_eq!(seq, par);
    }
}
