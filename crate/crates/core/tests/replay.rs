//! Policy reading against the recorded corpus fixture. The transport handed to
//! the client panics, so any attempt to leave the fixture fails the test.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use policheck_core::kg::KgFormat;
use policheck_core::llm::{BackendKind, ChatRequest, Completion, LlmError, Transport, TransportError};
use policheck_core::policy::{PolicyError, PolicyReader};
use policheck_core::prompts::{PromptCatalog, DEFAULT_VERSION};
use policheck_core::{LlmClient, LlmConfig, Vocabulary};

struct PanickingTransport;

impl Transport for PanickingTransport {
    fn chat(&self, _request: &ChatRequest<'_>) -> Result<Completion, TransportError> {
        panic!("network access attempted under the replay backend");
    }
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

fn replay_client() -> LlmClient {
    let config = LlmConfig {
        backend: BackendKind::Replay,
        fixture: Some(corpus().join("replay.json")),
        ..Default::default()
    };
    LlmClient::new(config, Some(Arc::new(PanickingTransport))).unwrap()
}

fn read(app: &str) -> (String, String, Vec<String>) {
    let client = replay_client();
    let catalog = PromptCatalog::builtin(DEFAULT_VERSION).unwrap();
    let vocab = Vocabulary::default();
    let doc = std::fs::read_to_string(corpus().join(app).join("policy.txt")).unwrap();
    let read = PolicyReader::new(&client, &catalog, &vocab).read_policy(&doc).unwrap();
    (read.kg.to_text(KgFormat::Json), client.ledger().to_text(), read.kg.iter().map(|t| t.to_string()).collect())
}

#[test]
fn replayed_policies_are_reproducible() {
    for app in ["app01_sunnyday", "app02_fitpulse", "app03_chatterbox", "app04_pixelpuzzle", "app05_quickshop", "app06_notekeeper"] {
        let (kg1, ledger1, _) = read(app);
        let (kg2, ledger2, _) = read(app);
        assert_eq!(kg1, kg2, "{app}");
        assert_eq!(ledger1, ledger2, "{app}");
    }
}

#[test]
fn negation_recheck_is_applied() {
    let (_, _, app03) = read("app03_chatterbox");
    assert!(app03.contains(&"<first_party, not-share, sms>".to_string()), "{app03:?}");
    assert!(app03.contains(&"<first_party, collect, sms>".to_string()), "{app03:?}");
    let (_, _, app05) = read("app05_quickshop");
    assert!(app05.contains(&"<first_party, not-share, location>".to_string()), "{app05:?}");
    assert!(!app05.contains(&"<first_party, share, location>".to_string()), "{app05:?}");
}

#[test]
fn malformed_reply_is_reformatted() {
    let (_, ledger, app05) = read("app05_quickshop");
    assert!(app05.contains(&"<first_party, collect, email_address>".to_string()), "{app05:?}");
    assert!(app05.contains(&"<first_party, collect, phone_number>".to_string()), "{app05:?}");
    assert!(ledger.contains("policy_reformat@v1"));
}

#[test]
fn unknown_prompt_is_a_replay_miss() {
    let client = replay_client();
    let catalog = PromptCatalog::builtin(DEFAULT_VERSION).unwrap();
    let vocab = Vocabulary::default();
    let err = PolicyReader::new(&client, &catalog, &vocab)
        .read_policy("We sell your call history to anyone who asks.")
        .unwrap_err();
    assert!(matches!(err, PolicyError::Llm(LlmError::ReplayMiss { .. })), "{err}");
}
