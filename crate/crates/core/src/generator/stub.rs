use super::{GenerationBackend, GenerationConfig, GenerationError, Setting};
use crate::sequencing::{build_decoder_target, EncoderInput, Segments};

/// Deterministic backend: `first And since stub. second` for every input.
///
/// The premise is lowercase like a trained continuation after the marker,
/// so extraction yields `Stub.`.
#[derive(Debug, Clone)]
pub struct StubBackend {
    premise: String,
    max_input_tokens: usize,
}

impl Default for StubBackend {
    fn default() -> Self {
        StubBackend {
            premise: "stub".to_string(),
            max_input_tokens: 1024,
        }
    }
}

impl StubBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Echo a different premise.
    pub fn with_premise(mut self, premise: impl Into<String>) -> Self {
        self.premise = premise.into();
        self
    }

    pub fn with_max_input_tokens(mut self, limit: usize) -> Self {
        self.max_input_tokens = limit;
        self
    }
}

impl GenerationBackend for StubBackend {
    fn id(&self) -> String {
        "stub".to_string()
    }

    fn supports(&self, _setting: Setting) -> bool {
        true
    }

    fn generate(&mut self, input: &EncoderInput, config: &GenerationConfig) -> Result<String, GenerationError> {
        if input.setting() != config.setting.input_setting() {
            return Err(GenerationError::InputMismatch {
                found: input.setting(),
                setting: config.setting,
            });
        }
        let length = input.text().split_whitespace().count();
        if length > self.max_input_tokens {
            return Err(GenerationError::InputTooLong {
                length,
                limit: self.max_input_tokens,
            });
        }
        Ok(match input.segments() {
            Segments::Plain { first, second } | Segments::Knowledge { first, second, .. } => {
                build_decoder_target(first, &self.premise, second)
                    .map_err(|e| GenerationError::Backend(e.to_string()))?
                    .into_string()
            }
            Segments::ZeroShot { .. } => input.text().replacen(input.mask(), &self.premise, 1),
        })
    }
}
