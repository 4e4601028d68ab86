use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GenerationBackend, GenerationConfig, GenerationError, Setting};
use crate::sequencing::EncoderInput;

/// Environment variable naming the model server.
pub const GENERATION_URL_ENV: &str = "GENERATION_BACKEND_URL";

/// Client for an external model server (for example a BART-large process).
///
/// The server exposes `GET /health` returning `{"settings": [...]}` and
/// `POST /generate` taking the encoder input and decoding options and
/// returning `{"output": "..."}`. Decoding strategy, including how the
/// zero-shot mask is infilled, belongs to the server.
pub struct RemoteBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    settings: Option<Vec<Setting>>,
}

#[derive(Deserialize)]
struct Health {
    settings: Vec<Setting>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    input: &'a str,
    setting: Setting,
    beam_width: usize,
    max_output_tokens: usize,
    mask_literal: &'a str,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    output: String,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenerationError::Backend(e.to_string()))?;
        Ok(RemoteBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            settings: None,
        })
    }

    pub fn from_env() -> Result<Self, GenerationError> {
        let url = std::env::var(GENERATION_URL_ENV)
            .map_err(|_| GenerationError::InvalidConfig(format!("{GENERATION_URL_ENV} is not set")))?;
        Self::new(url, Duration::from_secs(300))
    }

    /// Asks the server which settings it serves.
    pub fn load(&mut self) -> Result<(), GenerationError> {
        let health: Health = self
            .client
            .get(format!("{}/health", self.base_url))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| GenerationError::Backend(e.to_string()))?;
        self.settings = Some(health.settings);
        Ok(())
    }
}

impl GenerationBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.base_url)
    }

    fn supports(&self, setting: Setting) -> bool {
        self.settings.as_ref().is_some_and(|s| s.contains(&setting))
    }

    fn generate(&mut self, input: &EncoderInput, config: &GenerationConfig) -> Result<String, GenerationError> {
        if self.settings.is_none() {
            return Err(GenerationError::NotLoaded(self.id()));
        }
        if input.setting() != config.setting.input_setting() {
            return Err(GenerationError::InputMismatch { found: input.setting(), setting: config.setting });
        }
        let request = GenerateRequest {
            input: input.text(),
            setting: config.setting,
            beam_width: config.beam_width,
            max_output_tokens: config.max_output_tokens,
            mask_literal: &config.mask_literal,
            seed: config.seed,
        };
        let response: GenerateResponse = self
            .client
            .post(format!("{}/generate", self.base_url))
            .json(&request)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| GenerationError::Backend(e.to_string()))?;
        Ok(response.output)
    }
}
