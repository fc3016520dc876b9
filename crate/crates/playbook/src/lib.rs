//! Self-building agent playbooks.
//!
//! A planning agent explores an embedded household text world by writing
//! small executable plan scripts; a builder agent distills what happened into
//! a persistent rule base; a formulator compiles that base into a Markdown
//! manual that later episodes (and a held-out test sweep) consume. Everything
//! is deterministic: one root seed fans out to every component by labelled
//! hashing, and the LLM seat can be filled by a scripted persona, a replay
//! of a recorded run, or a real HTTP endpoint.

pub mod builder;
pub mod formulator;
pub mod harness;
pub mod libraries;
pub mod llm;
pub mod persona;
pub mod planlang;
pub mod planner;
pub mod rulestore;
pub mod textworld;

use sha2::{Digest, Sha256};

/// Derives a component seed from a root seed and a stable label, so that
/// adding a consumer never perturbs the streams of existing ones.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Hex SHA-256 of a text, the hash format used throughout run logs.
pub fn text_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
