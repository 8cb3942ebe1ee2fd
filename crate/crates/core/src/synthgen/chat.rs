//! Chat-completion backends for QA synthesis.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::SynthError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// A chat model that returns the assistant's text for a conversation.
pub trait ChatProvider: Send + Sync {
    fn model_name(&self) -> &str;

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, SynthError>;
}

fn default_temperature() -> f64 {
    0.6
}
fn default_max_output_tokens() -> u32 {
    4096
}
fn default_timeout_secs() -> u64 {
    300
}
fn default_max_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Extra generation rounds when answers fail anchoring or parsing.
    /// Transport retries use the same budget.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

impl ChatProviderConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(SynthError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.endpoint.is_empty() {
            return Err(SynthError::InvalidRequest("chat endpoint is empty".into()));
        }
        Ok(())
    }
}

/// `POST {endpoint}/v1/chat/completions`.
#[derive(Debug)]
pub struct OpenAiChatClient {
    config: ChatProviderConfig,
    url: String,
    api_key: Option<String>,
    client: Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: AssistantMessage,
}

#[derive(Deserialize)]
struct AssistantMessage {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiChatClient {
    pub fn new(config: ChatProviderConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                SynthError::InvalidRequest(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| SynthError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            url: format!(
                "{}/v1/chat/completions",
                config.endpoint.trim_end_matches('/')
            ),
            config,
            api_key,
            client,
        })
    }

    fn request_once(&self, body: &serde_json::Value) -> Result<String, (bool, SynthError)> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| (true, SynthError::ProviderUnreachable(e.to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (true, SynthError::ProviderUnreachable(e.to_string())))?;
        if !status.is_success() {
            let transient = status.as_u16() == 429 || status.is_server_error();
            return Err((
                transient,
                SynthError::ProviderError {
                    status: status.as_u16(),
                    body: crate::util::excerpt(&text),
                },
            ));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| (false, SynthError::MalformedModelOutput(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                (
                    false,
                    SynthError::MalformedModelOutput("response has no assistant content".into()),
                )
            })
    }
}

impl ChatProvider for OpenAiChatClient {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, SynthError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Ok(content) => return Ok(content),
                Err((true, e)) if attempt < self.config.max_retries => {
                    let wait = Duration::from_millis(500) * 2u32.saturating_pow(attempt);
                    warn!("{}: {e}; retrying in {wait:?}", self.url);
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

/// Replays canned assistant replies in order; fails once they run out.
#[derive(Debug)]
pub struct ScriptedChatProvider {
    model: String,
    replies: Mutex<VecDeque<String>>,
    transcript: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChatProvider {
    pub fn new<I, S>(model: impl Into<String>, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            model: model.into(),
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            transcript: Mutex::new(Vec::new()),
        }
    }

    /// Every conversation sent so far.
    pub fn transcript(&self) -> Vec<Vec<ChatMessage>> {
        self.transcript.lock().expect("transcript lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("replies lock").len()
    }
}

impl ChatProvider for ScriptedChatProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, SynthError> {
        self.transcript
            .lock()
            .expect("transcript lock")
            .push(messages.to_vec());
        self.replies
            .lock()
            .expect("replies lock")
            .pop_front()
            .ok_or_else(|| SynthError::ProviderUnreachable("scripted replies exhausted".into()))
    }
}
