use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Message, RequestKey};

/// One completion attempt, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(flatten)]
    pub key: RequestKey,
    pub messages: Vec<Message>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Route the response parsed to, when it did.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parsed_route: Option<String>,
    pub latency_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prompt_tokens: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub completion_tokens: Option<u64>,
}

/// Append-only, internally synchronized log of completion attempts.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Self {
        Self {
            entries: Mutex::new(entries),
        }
    }

    pub fn append(&self, entry: TranscriptEntry) {
        self.entries.lock().expect("transcript lock").push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by (trial, round, agent, attempt).
    pub fn snapshot(&self) -> Vec<TranscriptEntry> {
        let mut v = self.entries.lock().expect("transcript lock").clone();
        v.sort_by_key(|e| (e.key.trial, e.key.round, e.key.agent, e.key.attempt));
        v
    }
}
