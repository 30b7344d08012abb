//! Frozen model transcripts keyed by prompt digest.
//!
//! ```text
//! {"schema_version": 1,
//!  "entries": {"<sha256 of prompt>": {"stage", "template", "prompt", "response",
//!                                     "prompt_tokens", "completion_tokens", "elapsed_ms"}}}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatExchange, LlmError};

pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStore {
    schema_version: u32,
    entries: BTreeMap<String, ChatExchange>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self { schema_version: FIXTURE_SCHEMA_VERSION, entries: BTreeMap::new() }
    }

    pub fn get(&self, digest: &str) -> Option<&ChatExchange> {
        self.entries.get(digest)
    }

    pub fn lookup(&self, prompt: &str) -> Option<&ChatExchange> {
        self.get(&prompt_digest(prompt))
    }

    /// Stores an exchange under its prompt digest, replacing any earlier one.
    pub fn insert(&mut self, exchange: ChatExchange) {
        self.entries.insert(prompt_digest(&exchange.prompt), exchange);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &ChatExchange)> {
        self.entries.iter()
    }

    /// Parses a fixture and checks each key is the digest of its prompt.
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let store: ReplayStore = serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        if store.schema_version != FIXTURE_SCHEMA_VERSION {
            return Err(LlmError::Fixture(format!("unsupported fixture schema version {}", store.schema_version)));
        }
        for (digest, e) in &store.entries {
            if *digest != prompt_digest(&e.prompt) {
                return Err(LlmError::Fixture(format!("entry {digest} does not match its prompt digest")));
            }
        }
        Ok(store)
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("fixture serializes");
        out.push('\n');
        out
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_text()).map_err(|e| LlmError::Io(path.display().to_string(), e))
    }
}
