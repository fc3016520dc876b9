//! Deterministic test backend. Two modes: a response queue with per-response
//! guards (turn index within the session, required prompt substring), and a
//! responder function for fully synthetic agents.

use super::{Backend, BackendError, ChatMessage, Role};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct ScriptedResponse {
    pub response: String,
    /// Must appear somewhere in the latest user message.
    pub require_substring: Option<String>,
    /// Zero-based exchange index within the session this response answers.
    pub expect_exchange: Option<usize>,
}

impl ScriptedResponse {
    pub fn plain(response: impl Into<String>) -> Self {
        ScriptedResponse {
            response: response.into(),
            require_substring: None,
            expect_exchange: None,
        }
    }

    pub fn expecting(response: impl Into<String>, substring: impl Into<String>) -> Self {
        ScriptedResponse {
            response: response.into(),
            require_substring: Some(substring.into()),
            expect_exchange: None,
        }
    }

    pub fn at_exchange(mut self, index: usize) -> Self {
        self.expect_exchange = Some(index);
        self
    }
}

type Responder = Box<dyn FnMut(&str, &[ChatMessage]) -> Result<String, BackendError> + Send>;

enum Mode {
    Queue {
        queue: std::collections::VecDeque<ScriptedResponse>,
        exchange_counts: HashMap<String, usize>,
    },
    Responder(Responder),
}

pub struct ScriptedBackend {
    mode: Mode,
}

impl ScriptedBackend {
    /// One shared FIFO across all sessions; each response may carry guards.
    pub fn from_responses(responses: Vec<ScriptedResponse>) -> Self {
        ScriptedBackend {
            mode: Mode::Queue {
                queue: responses.into(),
                exchange_counts: HashMap::new(),
            },
        }
    }

    /// Fully synthetic mode: the responder sees the session id and the whole
    /// transcript and must return the assistant text.
    pub fn with_responder(
        responder: impl FnMut(&str, &[ChatMessage]) -> Result<String, BackendError> + Send + 'static,
    ) -> Self {
        ScriptedBackend { mode: Mode::Responder(Box::new(responder)) }
    }

    pub fn remaining(&self) -> usize {
        match &self.mode {
            Mode::Queue { queue, .. } => queue.len(),
            Mode::Responder(_) => usize::MAX,
        }
    }
}

fn excerpt(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        return text.to_string();
    }
    let prefix: String = text.chars().take(limit).collect();
    format!("{prefix}…")
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        match &mut self.mode {
            Mode::Responder(responder) => responder(session_id, messages),
            Mode::Queue { queue, exchange_counts } => {
                let last_user = messages
                    .iter()
                    .rev()
                    .find(|m| m.role == Role::User)
                    .map(|m| m.content.as_str())
                    .unwrap_or("");
                let exchange = *exchange_counts.get(session_id).unwrap_or(&0);
                let Some(next) = queue.pop_front() else {
                    return Err(BackendError::Exhausted {
                        session: session_id.to_string(),
                        detail: format!(
                            "no scripted response left for exchange {exchange}; prompt began: {}",
                            excerpt(last_user, 120)
                        ),
                    });
                };
                if let Some(expected) = next.expect_exchange {
                    if expected != exchange {
                        return Err(BackendError::GuardMismatch {
                            session: session_id.to_string(),
                            diff: format!(
                                "expected exchange index {expected}, session is at exchange {exchange}"
                            ),
                        });
                    }
                }
                if let Some(required) = &next.require_substring {
                    if !last_user.contains(required.as_str()) {
                        return Err(BackendError::GuardMismatch {
                            session: session_id.to_string(),
                            diff: format!(
                                "required substring not found in prompt\n  required: {required:?}\n  prompt:   {:?}",
                                excerpt(last_user, 240)
                            ),
                        });
                    }
                }
                exchange_counts.insert(session_id.to_string(), exchange + 1);
                Ok(next.response)
            }
        }
    }
}
