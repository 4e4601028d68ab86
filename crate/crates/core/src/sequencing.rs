//! Encoder inputs, decoder targets and implicit-premise extraction.
//!
//! The surface formats are plain text. The delimiter `[SEP]` is inserted
//! literally; how a backend's tokenizer treats it is the backend's business.
//!
//! ```text
//! plain      <first> [SEP] <second>
//! knowledge  <first> [SEP] <phrase> [SEP] <second>
//! zero-shot  <premise>. And since [MASK]. <claim>
//! target     <first> And since <hypothesis>. <second>
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Delimiter placed between the encoder segments.
pub const SEP: &str = "[SEP]";
/// Default mask literal for the zero-shot template.
pub const DEFAULT_MASK: &str = "[MASK]";
/// Discourse marker that introduces the implicit premise in a decoder target.
pub const MARKER: &str = "And since";

const MARKER_PREFIX: &str = "And since ";

/// Tokens ending in a period that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.",
    "u.s.", "u.k.", "inc.", "ltd.", "co.", "corp.", "no.", "mt.", "gen.", "rep.", "sen.", "gov.",
    "lt.", "col.", "capt.", "sgt.", "fig.", "approx.", "dept.", "est.", "jan.", "feb.", "aug.",
    "sept.", "oct.", "nov.", "dec.",
];

/// First words whose initial letter is lowercased after the marker.
/// Anything else (names, acronyms, "I") keeps its casing.
const LOWERCASE_OPENERS: &[&str] = &[
    "a", "an", "the", "he", "she", "it", "they", "we", "you", "his", "her", "its", "their", "our",
    "my", "your", "this", "that", "these", "those", "there", "some", "many", "most", "all",
    "every", "each", "no", "one", "people", "someone", "everyone", "nobody", "if", "when",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequencingError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{field} contains the reserved literal {literal:?}")]
    ReservedLiteral {
        field: &'static str,
        literal: String,
    },
    #[error("hypothesis already starts with the discourse marker: {0:?}")]
    DoubleMarker(String),
    #[error("decoder target does not split into 3 sentences with a marked middle: {0:?}")]
    MalformedTarget(String),
    #[error("nothing left after removing the discourse marker")]
    EmptyPremise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSetting {
    Plain,
    Knowledge,
    ZeroShot,
}

/// Text handed to a generation backend's encoder, tagged with the format it follows.
///
/// Only the builders in this module construct one, so the format invariant
/// of each setting always holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncoderInput {
    text: String,
    setting: InputSetting,
    mask: String,
}

fn default_mask() -> String {
    DEFAULT_MASK.to_string()
}

impl EncoderInput {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn setting(&self) -> InputSetting {
        self.setting
    }

    /// The mask literal of a zero-shot prompt.
    pub fn mask(&self) -> &str {
        &self.mask
    }

    /// Splits the input back into the segments it was built from.
    pub fn segments(&self) -> Segments<'_> {
        match self.setting {
            InputSetting::Plain => {
                let (a, b) = self.text.split_once(&format!(" {SEP} ")).unwrap();
                Segments::Plain { first: a, second: b }
            }
            InputSetting::Knowledge => {
                let sep = format!(" {SEP} ");
                let mut it = self.text.splitn(3, &sep);
                let first = it.next().unwrap();
                let phrase = it.next().unwrap();
                let second = it.next().unwrap();
                Segments::Knowledge {
                    first,
                    phrase,
                    second,
                }
            }
            InputSetting::ZeroShot => {
                let infix = format!(" {MARKER} {}. ", self.mask);
                let (premise, claim) = self.text.split_once(&infix).unwrap();
                Segments::ZeroShot { premise, claim }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segments<'a> {
    Plain {
        first: &'a str,
        second: &'a str,
    },
    Knowledge {
        first: &'a str,
        phrase: &'a str,
        second: &'a str,
    },
    ZeroShot {
        premise: &'a str,
        claim: &'a str,
    },
}

/// Full-argument training target: `first And since hypothesis. second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecoderTarget(String);

impl DecoderTarget {
    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

fn nonempty<'a>(field: &'static str, text: &'a str) -> Result<&'a str, SequencingError> {
    let t = text.trim();
    if t.is_empty() {
        Err(SequencingError::Empty(field))
    } else {
        Ok(t)
    }
}

fn reject_literal(field: &'static str, text: &str, literal: &str) -> Result<(), SequencingError> {
    if text.contains(literal) {
        Err(SequencingError::ReservedLiteral {
            field,
            literal: literal.to_string(),
        })
    } else {
        Ok(())
    }
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ends_sentence(text: &str) -> bool {
    text.trim_end_matches(['"', '\'', ')', '\u{201d}', '\u{2019}'])
        .ends_with(['.', '!', '?'])
}

fn with_terminal_period(text: &str) -> String {
    if ends_sentence(text) {
        text.to_string()
    } else {
        format!("{text}.")
    }
}

/// Builds the encoder input for the fine-tuned settings.
///
/// Without a phrase the result is `first [SEP] second`; with one it is
/// `first [SEP] phrase [SEP] second`.
pub fn build_encoder_input(
    first: &str,
    second: &str,
    knowledge_phrase: Option<&str>,
) -> Result<EncoderInput, SequencingError> {
    let first = normalize_ws(nonempty("first", first)?);
    let second = normalize_ws(nonempty("second", second)?);
    reject_literal("first", &first, SEP)?;
    reject_literal("second", &second, SEP)?;
    let (text, setting) = match knowledge_phrase {
        None => (format!("{first} {SEP} {second}"), InputSetting::Plain),
        Some(phrase) => {
            let phrase = normalize_ws(nonempty("knowledge_phrase", phrase)?);
            reject_literal("knowledge_phrase", &phrase, SEP)?;
            (
                format!("{first} {SEP} {phrase} {SEP} {second}"),
                InputSetting::Knowledge,
            )
        }
    };
    Ok(EncoderInput {
        text,
        setting,
        mask: default_mask(),
    })
}

/// Builds `premise. And since [MASK]. claim` for the zero-shot setting.
pub fn build_zero_shot_prompt(premise: &str, claim: &str) -> Result<EncoderInput, SequencingError> {
    build_zero_shot_prompt_with_mask(premise, claim, DEFAULT_MASK)
}

pub fn build_zero_shot_prompt_with_mask(
    premise: &str,
    claim: &str,
    mask: &str,
) -> Result<EncoderInput, SequencingError> {
    let mask = nonempty("mask", mask)?;
    let premise = normalize_ws(nonempty("premise", premise)?);
    let claim = normalize_ws(nonempty("claim", claim)?);
    reject_literal("premise", &premise, mask)?;
    reject_literal("claim", &claim, mask)?;
    Ok(EncoderInput {
        text: format!(
            "{} {MARKER} {mask}. {claim}",
            with_terminal_period(&premise)
        ),
        setting: InputSetting::ZeroShot,
        mask: mask.to_string(),
    })
}

fn lowercase_opener(hypothesis: &str) -> String {
    let first_word = hypothesis
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_end_matches(|c: char| !c.is_alphanumeric());
    if LOWERCASE_OPENERS.contains(&first_word.to_lowercase().as_str()) {
        let mut chars = hypothesis.chars();
        match chars.next() {
            Some(c) => c.to_lowercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        hypothesis.to_string()
    }
}

/// Builds the full-argument decoder target for one training triple.
pub fn build_decoder_target(
    first: &str,
    hypothesis: &str,
    second: &str,
) -> Result<DecoderTarget, SequencingError> {
    let first = normalize_ws(nonempty("first", first)?);
    let hypothesis = normalize_ws(nonempty("hypothesis", hypothesis)?);
    let second = normalize_ws(nonempty("second", second)?);
    if hypothesis.to_lowercase().starts_with("and since") {
        return Err(SequencingError::DoubleMarker(hypothesis));
    }
    let body = hypothesis.trim_end_matches(['.', '!', '?']).trim_end();
    if body.is_empty() {
        return Err(SequencingError::Empty("hypothesis"));
    }
    let text = format!(
        "{} {MARKER} {}. {second}",
        with_terminal_period(&first),
        lowercase_opener(body)
    );
    let sentences = split_sentences(&text);
    if sentences.len() != 3 || !sentences[1].starts_with(MARKER_PREFIX) {
        return Err(SequencingError::MalformedTarget(text));
    }
    Ok(DecoderTarget(text))
}

fn is_abbreviation(token: &str) -> bool {
    let t = token
        .trim_start_matches(['"', '\'', '(', '\u{201c}', '\u{2018}'])
        .to_lowercase();
    ABBREVIATIONS.contains(&t.as_str())
}

fn opens_sentence(token: &str) -> bool {
    token
        .trim_start_matches(['"', '\'', '(', '\u{201c}', '\u{2018}'])
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Rule-based sentence splitter.
///
/// A boundary falls between two whitespace-separated tokens when the first
/// ends in `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets), is not a known abbreviation, and the second starts with an
/// uppercase letter or digit. Sentences are returned with internal
/// whitespace collapsed to single spaces.
pub fn split_sentences(text: &str) -> Vec<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        current.push(token);
        let boundary = match tokens.get(i + 1) {
            Some(next) => ends_sentence(token) && !is_abbreviation(token) && opens_sentence(next),
            None => true,
        };
        if boundary {
            sentences.push(current.join(" "));
            current.clear();
        }
    }
    sentences
}

/// Implicit premise pulled out of a generated argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub premise: String,
    /// True when no sentence carried the marker and the fallback rule picked one.
    pub fallback: bool,
}

fn finish_premise(raw: &str) -> Result<String, SequencingError> {
    let raw = raw.trim();
    if raw.trim_end_matches(['.', '!', '?']).trim().is_empty() {
        return Err(SequencingError::EmptyPremise);
    }
    let mut chars = raw.chars();
    let capitalized: String = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    Ok(with_terminal_period(&capitalized))
}

fn content_tokens(text: &str) -> std::collections::BTreeSet<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn overlap(a: &str, b: &str) -> f64 {
    let a = content_tokens(a);
    let b = content_tokens(b);
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Index of the sentence least similar to every reference sentence.
/// Ties go to the earliest sentence.
fn most_novel(sentences: &[String], references: &[&str]) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, s) in sentences.iter().enumerate() {
        let score = references
            .iter()
            .map(|r| overlap(s, r))
            .fold(0.0_f64, f64::max);
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Extracts the implicit premise from a generated argument.
///
/// The first sentence that starts with `And since ` wins; the marker is
/// removed, the first letter uppercased and a terminal period ensured. With
/// no marked sentence a three-sentence output yields its middle sentence,
/// and any other length yields its most novel sentence relative to the
/// first and last sentences of the output.
pub fn extract_implicit_premise(generated_argument: &str) -> Result<Extraction, SequencingError> {
    extract_with_context(generated_argument, None)
}

/// Like [`extract_implicit_premise`], but the fallback measures novelty
/// against the stated premise and claim that were fed to the generator.
pub fn extract_implicit_premise_in_context(
    generated_argument: &str,
    premise: &str,
    claim: &str,
) -> Result<Extraction, SequencingError> {
    extract_with_context(generated_argument, Some((premise, claim)))
}

fn extract_with_context(
    generated_argument: &str,
    context: Option<(&str, &str)>,
) -> Result<Extraction, SequencingError> {
    if generated_argument.trim().is_empty() {
        return Err(SequencingError::Empty("generated_argument"));
    }
    let sentences = split_sentences(generated_argument);
    if let Some(marked) = sentences.iter().find(|s| s.starts_with(MARKER_PREFIX)) {
        return Ok(Extraction {
            premise: finish_premise(&marked[MARKER_PREFIX.len()..])?,
            fallback: false,
        });
    }
    let picked = match sentences.len() {
        3 => 1,
        1 => 0,
        n => match context {
            Some((premise, claim)) => most_novel(&sentences, &[premise, claim]),
            None if n == 2 => 1,
            None => {
                let inner = &sentences[1..n - 1];
                1 + most_novel(inner, &[&sentences[0], &sentences[n - 1]])
            }
        },
    };
    Ok(Extraction {
        premise: finish_premise(&sentences[picked])?,
        fallback: true,
    })
}
