//! Language-model client contract with an HTTP chat-completion implementation
//! and an offline deterministic mock.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::parse_record_pairs;
use crate::error::{Error, Result};

/// Sends one prompt, returns one completion.
pub trait LlmClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Settings for an OpenAI-style `/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatClientConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        ChatClientConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-3.5-turbo".into(),
            token_env: "HYPERSOC_LLM_TOKEN".into(),
            temperature: 0.0,
            timeout_secs: 60,
        }
    }
}

pub struct ChatCompletionClient {
    config: ChatClientConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl ChatCompletionClient {
    /// Reads the token from `config.token_env`; a missing variable means no auth header.
    pub fn from_env(config: ChatClientConfig) -> Self {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: ChatClientConfig, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        ChatCompletionClient { config, token, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

/// Request body: a single user-role message carrying the prompt.
pub fn chat_request_body(model: &str, prompt: &str, temperature: f64) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": temperature,
    })
}

/// Text of the first choice of a chat-completion response.
pub fn first_choice_text(response: &Value) -> Result<String> {
    let choice = response
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Client("response has no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Client("first choice has no text".into()))
}

impl LlmClient for ChatCompletionClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = chat_request_body(&self.config.model, prompt, self.config.temperature);
        let mut req = self.agent.post(&self.endpoint());
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Client(format!("{}: {e}", self.endpoint())))?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Client(format!("decoding response: {e}")))?;
        first_choice_text(&value)
    }
}

/// Offline client whose narrative is a fixed function of the prompt's record pairs.
#[derive(Debug, Clone)]
pub struct MockClient {
    model_id: String,
}

impl Default for MockClient {
    fn default() -> Self {
        MockClient {
            model_id: "mock-narrator-v1".into(),
        }
    }
}

impl MockClient {
    pub fn new(model_id: impl Into<String>) -> Self {
        MockClient {
            model_id: model_id.into(),
        }
    }
}

impl LlmClient for MockClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let pairs = parse_record_pairs(prompt);
        if pairs.is_empty() {
            return Err(Error::Client("prompt carries no user records".into()));
        }
        Ok(mock_narrative(&pairs))
    }
}

fn mock_narrative(pairs: &[(String, String)]) -> String {
    let name = pairs
        .iter()
        .find(|(k, v)| k == "Name" && v != "Unknown")
        .map(|(_, v)| v.as_str())
        .unwrap_or("This user");
    let mut parts = vec![format!("{name} is a member of an online personality community.")];
    for (k, v) in pairs {
        if k == "Name" {
            continue;
        }
        let key = k.to_lowercase();
        let sentence = match (key.as_str(), v.as_str()) {
            (_, "Unknown") => format!("Their {key} is not disclosed."),
            ("groups", _) => format!("They take part in the {v} groups."),
            ("about", _) => format!("They describe themselves as follows: {v}"),
            ("followers", _) => format!("They have {v} followers."),
            _ => format!("Their {key} is {v}."),
        };
        parts.push(sentence);
    }
    parts.join(" ")
}

/// Local narrative used when the client keeps failing.
pub fn fallback_narrative(pairs: &[(String, String)]) -> String {
    let known: Vec<String> = pairs
        .iter()
        .filter(|(_, v)| v != "Unknown")
        .map(|(k, v)| format!("{k}: {v}."))
        .collect();
    if known.is_empty() {
        "No information is available about this user.".to_string()
    } else {
        known.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_uses_attributes() {
        let prompt = "Task: x\nDemand: y\nUser Records: <Name>: <Ann>; <Gender>: <Female>; <Age>: <Unknown>; <Groups>: <book, walk>;";
        let c = MockClient::default();
        let a = c.complete(prompt).unwrap();
        assert_eq!(a, c.complete(prompt).unwrap());
        assert!(a.starts_with("Ann is"));
        assert!(a.contains("gender is Female"));
        assert!(a.contains("age is not disclosed"));
        assert!(a.contains("book, walk"));
        assert!(c.complete("no records").is_err());
    }

    #[test]
    fn response_parsing() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "hello"}}]});
        assert_eq!(first_choice_text(&v).unwrap(), "hello");
        let v = json!({"choices": [{"text": "legacy"}]});
        assert_eq!(first_choice_text(&v).unwrap(), "legacy");
        assert!(first_choice_text(&json!({"choices": []})).is_err());
    }

    #[test]
    fn request_is_single_user_message() {
        let b = chat_request_body("m", "p", 0.0);
        assert_eq!(b["messages"].as_array().unwrap().len(), 1);
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "p");
        assert_eq!(b["temperature"], 0.0);
    }

    #[test]
    fn fallback_skips_unknowns() {
        let pairs = vec![("Gender".to_string(), "Male".to_string()), ("Age".to_string(), "Unknown".to_string())];
        assert_eq!(fallback_narrative(&pairs), "Gender: Male.");
    }
}
