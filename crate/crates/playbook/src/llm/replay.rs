//! Record/replay: every live exchange is logged as a hashed record; the
//! replay backend re-serves responses by transcript hash and detects any
//! tampering or drift at the exact exchange where it happens.

use super::{prompt_hash, Backend, BackendError, ChatMessage};
use crate::text_hash;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub session_id: String,
    /// Zero-based exchange index within the session.
    pub exchange: usize,
    pub system_hash: String,
    pub prompt_hash: String,
    pub response_hash: String,
    pub response: String,
}

/// Wraps any backend and logs one [`ReplayRecord`] per completed exchange.
pub struct RecordingBackend<B: Backend> {
    inner: B,
    records: Arc<Mutex<Vec<ReplayRecord>>>,
    exchange_counts: HashMap<String, usize>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            records: Arc::new(Mutex::new(Vec::new())),
            exchange_counts: HashMap::new(),
        }
    }

    pub fn records_handle(&self) -> Arc<Mutex<Vec<ReplayRecord>>> {
        Arc::clone(&self.records)
    }

    pub fn take_records(&mut self) -> Vec<ReplayRecord> {
        std::mem::take(&mut *self.records.lock().expect("records lock"))
    }

    pub fn inner_mut(&mut self) -> &mut B {
        &mut self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn name(&self) -> &'static str {
        "recording"
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let response = self.inner.complete(session_id, messages)?;
        let exchange = self.exchange_counts.entry(session_id.to_string()).or_insert(0);
        let record = ReplayRecord {
            session_id: session_id.to_string(),
            exchange: *exchange,
            system_hash: text_hash(&messages[0].content),
            prompt_hash: prompt_hash(messages),
            response_hash: text_hash(&response),
            response: response.clone(),
        };
        *exchange += 1;
        self.records.lock().expect("records lock").push(record);
        Ok(response)
    }
}

/// Serves recorded responses keyed by (system hash, transcript hash); no
/// network, no ordering requirements across sessions.
#[derive(Debug)]
pub struct ReplayBackend {
    by_prompt: HashMap<(String, String), ReplayRecord>,
    exchange_counts: HashMap<String, usize>,
}

impl ReplayBackend {
    /// Verifies every record's response hash up front so a tampered log is
    /// rejected at the exact exchange that was edited.
    pub fn load(records: Vec<ReplayRecord>) -> Result<Self, BackendError> {
        let mut by_prompt = HashMap::new();
        for record in records {
            if text_hash(&record.response) != record.response_hash {
                return Err(BackendError::CorruptRecord {
                    exchange: record.exchange,
                    detail: format!(
                        "response text does not match its recorded hash (session {}, prompt hash {})",
                        record.session_id, record.prompt_hash
                    ),
                });
            }
            by_prompt.insert(
                (record.system_hash.clone(), record.prompt_hash.clone()),
                record,
            );
        }
        Ok(ReplayBackend { by_prompt, exchange_counts: HashMap::new() })
    }

    pub fn len(&self) -> usize {
        self.by_prompt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_prompt.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let exchange = self.exchange_counts.entry(session_id.to_string()).or_insert(0);
        let key = (text_hash(&messages[0].content), prompt_hash(messages));
        match self.by_prompt.get(&key) {
            Some(record) => {
                *exchange += 1;
                Ok(record.response.clone())
            }
            None => Err(BackendError::ReplayMiss {
                session: session_id.to_string(),
                exchange: *exchange,
                prompt_hash: key.1,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatSession, ScriptedBackend, ScriptedResponse};

    fn record_two_exchanges() -> Vec<ReplayRecord> {
        let mut backend = RecordingBackend::new(ScriptedBackend::from_responses(vec![
            ScriptedResponse::plain("first reply"),
            ScriptedResponse::plain("second reply"),
        ]));
        let mut session = ChatSession::new("s", "sys");
        session.send(&mut backend, "one").unwrap();
        session.send(&mut backend, "two").unwrap();
        backend.take_records()
    }

    #[test]
    fn replay_reproduces_assistant_turns_byte_identically() {
        let records = record_two_exchanges();
        let mut replay = ReplayBackend::load(records).unwrap();
        let mut session = ChatSession::new("different-session-id", "sys");
        assert_eq!(session.send(&mut replay, "one").unwrap(), "first reply");
        assert_eq!(session.send(&mut replay, "two").unwrap(), "second reply");
    }

    #[test]
    fn replay_miss_names_the_prompt_hash() {
        let records = record_two_exchanges();
        let mut replay = ReplayBackend::load(records).unwrap();
        let mut session = ChatSession::new("s", "sys");
        let err = session.send(&mut replay, "different question").unwrap_err();
        match err {
            BackendError::ReplayMiss { prompt_hash, exchange, .. } => {
                assert_eq!(prompt_hash.len(), 64);
                assert_eq!(exchange, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn edited_response_detected_at_its_exchange() {
        let mut records = record_two_exchanges();
        records[1].response.replace_range(0..1, "S");
        let err = ReplayBackend::load(records).unwrap_err();
        match err {
            BackendError::CorruptRecord { exchange, .. } => assert_eq!(exchange, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn divergent_prior_turn_changes_the_prompt_hash() {
        let records = record_two_exchanges();
        let mut replay = ReplayBackend::load(records).unwrap();
        let mut session = ChatSession::new("s", "sys");
        session.send(&mut replay, "one").unwrap();
        // Tamper with history: the transcript hash for exchange 1 no longer
        // matches anything recorded.
        session.push_user("two").unwrap();
        session.push_assistant("made up").unwrap();
        let err = session.send(&mut replay, "three").unwrap_err();
        assert!(matches!(err, BackendError::ReplayMiss { exchange: 1, .. }));
    }
}
