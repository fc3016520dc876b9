//! OpenAI-compatible chat-completions client: temperature 0, bounded
//! retries, and client-side truncation of oldest non-system exchanges to stay
//! inside the context budget.

use super::{Backend, BackendError, ChatMessage, Role};
use serde::Deserialize;
use serde_json::json;
use std::time::Duration;

/// Approximate chars-per-token factor used to express the context budget in
/// characters; the budget below corresponds to a 16000-token window.
const CHARS_PER_TOKEN: usize = 4;
pub const DEFAULT_MAX_CONTEXT_TOKENS: usize = 16000;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_context_tokens: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            api_key: None,
            model: "gpt-4-1106-preview".to_string(),
            temperature: 0.0,
            max_context_tokens: DEFAULT_MAX_CONTEXT_TOKENS,
            max_retries: 3,
            timeout_secs: 120,
        }
    }
}

impl HttpConfig {
    /// Environment overrides: PLAYBOOK_BASE_URL, PLAYBOOK_API_KEY (falls back
    /// to OPENAI_API_KEY), PLAYBOOK_MODEL.
    pub fn apply_env(mut self) -> Self {
        if let Ok(url) = std::env::var("PLAYBOOK_BASE_URL") {
            self.base_url = url;
        }
        if let Ok(key) = std::env::var("PLAYBOOK_API_KEY") {
            self.api_key = Some(key);
        } else if let Ok(key) = std::env::var("OPENAI_API_KEY") {
            self.api_key = Some(key);
        }
        if let Ok(model) = std::env::var("PLAYBOOK_MODEL") {
            self.model = model;
        }
        self
    }

    fn char_budget(&self) -> usize {
        self.max_context_tokens * CHARS_PER_TOKEN
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Keeps the system message and as many of the most recent turns as fit the
/// character budget. Whole user/assistant pairs are dropped from the front so
/// the transcript stays alternating. Errors only when even (system + latest
/// user) overflows.
pub fn truncate_to_budget(
    messages: &[ChatMessage],
    char_budget: usize,
) -> Result<Vec<ChatMessage>, BackendError> {
    let total: usize = messages.iter().map(|m| m.content.len()).sum();
    if total <= char_budget {
        return Ok(messages.to_vec());
    }
    let system = &messages[0];
    let rest = &messages[1..];
    // Try suffixes that start at a user message, newest-first preference for
    // the longest fitting suffix.
    let mut start = 0;
    while start < rest.len() {
        let kept: usize =
            system.content.len() + rest[start..].iter().map(|m| m.content.len()).sum::<usize>();
        if kept <= char_budget && rest[start].role == Role::User {
            let mut out = vec![system.clone()];
            out.extend(rest[start..].iter().cloned());
            return Ok(out);
        }
        start += 1;
    }
    Err(BackendError::ContextOverflow { chars: total, budget: char_budget })
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .expect("http client builds");
        HttpBackend { config, client }
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String, (bool, String)> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut request = self.client.post(&url).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| (true, format!("transport: {e}")))?;
        let status = response.status();
        let text = response.text().map_err(|e| (true, format!("read body: {e}")))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err((true, format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err((false, format!("status {status}: {text}")));
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| (false, format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or((false, "response contained no choices".to_string()))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &'static str {
        "http"
    }

    fn complete(
        &mut self,
        _session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let trimmed = truncate_to_budget(messages, self.config.char_budget())?;
        let body = json!({
            "model": self.config.model,
            "messages": trimmed
                .iter()
                .map(|m| json!({"role": m.role.to_string(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": self.config.temperature,
        });
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.post_once(&body) {
                Ok(content) => return Ok(content),
                Err((retriable, detail)) => {
                    if !retriable || attempts > self.config.max_retries {
                        return Err(BackendError::Http { attempts, detail });
                    }
                    std::thread::sleep(Duration::from_millis(250 * attempts as u64));
                }
            }
        }
    }
}
