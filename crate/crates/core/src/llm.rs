//! Minimal chat-completion client shared by the live extractor and live transport.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("api key environment variable {0} is not set")]
    MissingKey(String),
    #[error("request failed: {0}")]
    Http(String),
    #[error("unexpected response: {0}")]
    Response(String),
}

/// Endpoint settings. The key itself is never stored, only the name of the
/// environment variable holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveEndpoint {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct ChatClient {
    endpoint: LiveEndpoint,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl ChatClient {
    pub fn new(endpoint: LiveEndpoint) -> Result<Self, ChatError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| ChatError::Http(e.to_string()))?;
        Ok(ChatClient { endpoint, http })
    }

    pub fn endpoint(&self) -> &LiveEndpoint {
        &self.endpoint
    }

    /// Sends one system + user exchange and returns the assistant text.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, ChatError> {
        let key = std::env::var(&self.endpoint.api_key_env)
            .map_err(|_| ChatError::MissingKey(self.endpoint.api_key_env.clone()))?;
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.endpoint.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self
            .http
            .post(url)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| ChatError::Http(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(ChatError::Http(format!("status {status}: {text}")));
        }
        let completion: Completion = resp
            .json()
            .map_err(|e| ChatError::Response(e.to_string()))?;
        completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChatError::Response("no message content".into()))
    }
}
