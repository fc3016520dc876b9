//! Chat-session plumbing shared by every agent: persistent per-agent message
//! history with strict user/assistant alternation, a pluggable [`Backend`]
//! trait, and hashing helpers used by the record/replay machinery.

pub mod http;
pub mod parse;
pub mod prompts;
pub mod replay;
pub mod scripted;

pub use http::{HttpBackend, HttpConfig};
pub use parse::{
    extract_code_block, parse_planner_response, parse_rule_ops, render_rule_ops, PlannerTurn,
    RuleOpParse,
};
pub use replay::{RecordingBackend, ReplayBackend, ReplayRecord};
pub use scripted::{ScriptedBackend, ScriptedResponse};

use crate::text_hash;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("session {session}: a user message is already awaiting a reply")]
    AwaitingAssistant { session: String },
    #[error("session {session}: an assistant message requires a pending user message")]
    NoPendingUser { session: String },
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("scripted backend exhausted for session {session}: {detail}")]
    Exhausted { session: String, detail: String },
    #[error("scripted guard mismatch in session {session}:\n{diff}")]
    GuardMismatch { session: String, diff: String },
    #[error("replay miss: no recorded response for prompt hash {prompt_hash} (session {session}, exchange {exchange})")]
    ReplayMiss {
        session: String,
        exchange: usize,
        prompt_hash: String,
    },
    #[error("replay log corrupt at exchange {exchange}: {detail}")]
    CorruptRecord { exchange: usize, detail: String },
    #[error("http error after {attempts} attempts: {detail}")]
    Http { attempts: u32, detail: String },
    #[error("context length exceeded: {chars} chars > budget {budget} (cannot truncate further)")]
    ContextOverflow { chars: usize, budget: usize },
    #[error("{0}")]
    Other(String),
}

/// Anything that can answer a chat transcript. `complete` receives the whole
/// message list (system first) and returns the next assistant message.
pub trait Backend: Send {
    fn name(&self) -> &'static str;
    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError>;
}

impl Backend for Box<dyn Backend> {
    fn name(&self) -> &'static str {
        self.as_ref().name()
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        self.as_mut().complete(session_id, messages)
    }
}

/// Delegating backend that fails exactly once, at a chosen call index.
/// Exercises abort and checkpoint-resume paths deterministically.
pub struct FlakyBackend<B: Backend> {
    inner: B,
    fail_at: u64,
    calls: u64,
}

impl<B: Backend> FlakyBackend<B> {
    pub fn new(inner: B, fail_at: u64) -> Self {
        FlakyBackend { inner, fail_at, calls: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl<B: Backend> Backend for FlakyBackend<B> {
    fn name(&self) -> &'static str {
        "flaky"
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let call = self.calls;
        self.calls += 1;
        if call == self.fail_at {
            return Err(BackendError::Http {
                attempts: 1,
                detail: "injected transient failure".to_string(),
            });
        }
        self.inner.complete(session_id, messages)
    }
}

/// Hash of everything the model would see for the *next* completion: the
/// role-tagged transcript including the latest user message.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let mut buf = String::new();
    for message in messages {
        buf.push_str(&format!("{}\n{}\n{}\n", message.role, message.content.len(), message.content));
    }
    text_hash(&buf)
}

/// Append-only per-agent conversation. The first message is the system
/// prompt; afterwards user and assistant messages strictly alternate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    session_id: String,
    messages: Vec<ChatMessage>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, system_prompt: impl Into<String>) -> Self {
        ChatSession {
            session_id: session_id.into(),
            messages: vec![ChatMessage::new(Role::System, system_prompt)],
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn system_prompt(&self) -> &str {
        &self.messages[0].content
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    /// Completed user→assistant exchanges.
    pub fn exchange_count(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }

    pub fn awaiting_assistant(&self) -> bool {
        matches!(self.messages.last(), Some(m) if m.role == Role::User)
    }

    pub fn push_user(&mut self, content: impl Into<String>) -> Result<(), SessionError> {
        if self.awaiting_assistant() {
            return Err(SessionError::AwaitingAssistant { session: self.session_id.clone() });
        }
        self.messages.push(ChatMessage::new(Role::User, content));
        Ok(())
    }

    pub fn push_assistant(&mut self, content: impl Into<String>) -> Result<(), SessionError> {
        if !self.awaiting_assistant() {
            return Err(SessionError::NoPendingUser { session: self.session_id.clone() });
        }
        self.messages.push(ChatMessage::new(Role::Assistant, content));
        Ok(())
    }

    /// Appends the user message, obtains the assistant reply from the
    /// backend, appends it, and returns it.
    pub fn send(
        &mut self,
        backend: &mut dyn Backend,
        content: impl Into<String>,
    ) -> Result<String, BackendError> {
        self.push_user(content)
            .map_err(|e| BackendError::Other(e.to_string()))?;
        match backend.complete(&self.session_id, &self.messages) {
            Ok(reply) => {
                self.push_assistant(reply.clone())
                    .expect("a user message is pending by construction");
                Ok(reply)
            }
            Err(err) => {
                // Leave the session consistent so a retry can re-send.
                self.messages.pop();
                Err(err)
            }
        }
    }

    /// True iff messages follow system, then (user, assistant)* with at most
    /// one trailing user.
    pub fn alternation_holds(&self) -> bool {
        if self.messages.first().map(|m| m.role) != Some(Role::System) {
            return false;
        }
        for (i, message) in self.messages.iter().skip(1).enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if message.role != expected {
                return false;
            }
        }
        true
    }

    pub fn char_len(&self) -> usize {
        self.messages.iter().map(|m| m.content.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sessions_enforce_alternation() {
        let mut session = ChatSession::new("planner/epoch_0", "system text");
        assert!(session.alternation_holds());
        session.push_user("hello").unwrap();
        assert_eq!(
            session.push_user("again"),
            Err(SessionError::AwaitingAssistant { session: "planner/epoch_0".to_string() })
        );
        session.push_assistant("reply").unwrap();
        assert_eq!(
            session.push_assistant("again"),
            Err(SessionError::NoPendingUser { session: "planner/epoch_0".to_string() })
        );
        assert!(session.alternation_holds());
        assert_eq!(session.exchange_count(), 1);
    }

    #[test]
    fn send_appends_both_turns() {
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain("the answer")]);
        let mut session = ChatSession::new("s", "sys");
        let reply = session.send(&mut backend, "question").unwrap();
        assert_eq!(reply, "the answer");
        assert_eq!(session.messages().len(), 3);
        assert!(session.alternation_holds());
    }

    #[test]
    fn failed_send_leaves_session_retryable() {
        let mut backend = ScriptedBackend::from_responses(vec![]);
        let mut session = ChatSession::new("s", "sys");
        assert!(session.send(&mut backend, "question").is_err());
        assert!(!session.awaiting_assistant());
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain("ok")]);
        assert_eq!(session.send(&mut backend, "question").unwrap(), "ok");
    }

    #[test]
    fn prompt_hash_distinguishes_role_boundaries() {
        let a = vec![ChatMessage::new(Role::System, "ab"), ChatMessage::new(Role::User, "c")];
        let b = vec![ChatMessage::new(Role::System, "a"), ChatMessage::new(Role::User, "bc")];
        assert_ne!(prompt_hash(&a), prompt_hash(&b));
    }
}
