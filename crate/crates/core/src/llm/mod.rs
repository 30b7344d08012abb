//! The single boundary for model calls.
//!
//! [`LlmClient::complete`] dispatches a rendered prompt to the configured
//! backend and appends the exchange to the client's ledger:
//!
//! * `live` calls an OpenAI-compatible endpoint at temperature 0 with bounded
//!   retries,
//! * `replay` answers from a frozen fixture and never touches a transport,
//! * `record` calls the live endpoint and stores every exchange in the fixture.

mod http;
mod ledger;
mod replay;

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ChatRequest, Completion, HttpTransport, Transport, TransportError};
pub use ledger::{ledger_totals, CostReport, StageTotals, UsageLedger, LEDGER_SCHEMA_VERSION};
pub use replay::{prompt_digest, ReplayStore, FIXTURE_SCHEMA_VERSION};

use crate::prompts::RenderedPrompt;

pub const API_KEY_ENV: &str = "POLICHECK_API_KEY";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PolicyRead,
    LeakMap,
    Report,
    BaselineStage1,
    BaselineStage2,
    BaselineStage3,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::PolicyRead,
        Stage::LeakMap,
        Stage::Report,
        Stage::BaselineStage1,
        Stage::BaselineStage2,
        Stage::BaselineStage3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PolicyRead => "policy_read",
            Stage::LeakMap => "leak_map",
            Stage::Report => "report",
            Stage::BaselineStage1 => "baseline_stage1",
            Stage::BaselineStage2 => "baseline_stage2",
            Stage::BaselineStage3 => "baseline_stage3",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One prompt/response pair with its cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub stage: Stage,
    /// Prompt template id, `name@version`.
    pub template: String,
    pub prompt: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{stage}: empty prompt")]
    EmptyPrompt { stage: Stage },
    #[error("{stage}: transport failed after {attempts} attempt(s): {message}")]
    Transport { stage: Stage, attempts: u32, message: String },
    #[error("{stage}: replay fixture has no entry for prompt digest {digest}")]
    ReplayMiss { stage: Stage, digest: String },
    #[error("llm configuration: {0}")]
    Config(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Record,
}

impl std::str::FromStr for BackendKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendKind::Live),
            "replay" => Ok(BackendKind::Replay),
            "record" => Ok(BackendKind::Record),
            other => Err(LlmError::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LlmConfig {
    pub backend: BackendKind,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Replay/record fixture file.
    pub fixture: Option<PathBuf>,
    pub timeout: Duration,
    /// First retry waits this long; each further retry doubles it.
    pub retry_backoff: Duration,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Live,
            base_url: "https://api.deepseek.com/v1".into(),
            model: "deepseek-chat".into(),
            temperature: 0.0,
            max_retries: 3,
            parallelism: 4,
            fixture: None,
            timeout: Duration::from_secs(120),
            retry_backoff: Duration::from_millis(500),
        }
    }
}

pub struct LlmClient {
    config: LlmConfig,
    transport: Option<Arc<dyn Transport>>,
    fixture: Option<RwLock<ReplayStore>>,
    ledger: Mutex<Vec<ChatExchange>>,
    pool: rayon::ThreadPool,
    started: Instant,
}

impl LlmClient {
    /// Builds a client. `live` and `record` need a transport; `replay` and
    /// `record` need `config.fixture` (record starts empty if the file is absent).
    pub fn new(config: LlmConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, LlmError> {
        if config.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be at least 1".into()));
        }
        let fixture = match config.backend {
            BackendKind::Live => None,
            BackendKind::Replay => {
                let path = config.fixture.as_ref().ok_or_else(|| LlmError::Config("replay backend needs a fixture file".into()))?;
                Some(ReplayStore::load(path)?)
            }
            BackendKind::Record => {
                let path = config.fixture.as_ref().ok_or_else(|| LlmError::Config("record backend needs a fixture file".into()))?;
                Some(if path.exists() { ReplayStore::load(path)? } else { ReplayStore::new() })
            }
        };
        if config.backend != BackendKind::Replay && transport.is_none() {
            return Err(LlmError::Config("live and record backends need a transport".into()));
        }
        Self::assemble(config, transport, fixture)
    }

    /// Replay client over an in-memory fixture.
    pub fn with_replay(store: ReplayStore, parallelism: usize) -> Result<Self, LlmError> {
        let config = LlmConfig { backend: BackendKind::Replay, parallelism, ..Default::default() };
        Self::assemble(config, None, Some(store))
    }

    /// Client whose transport is the HTTP endpoint in `config`, with the API
    /// key taken from `POLICHECK_API_KEY`.
    pub fn from_config(config: LlmConfig) -> Result<Self, LlmError> {
        let transport: Option<Arc<dyn Transport>> = match config.backend {
            BackendKind::Replay => None,
            _ => Some(Arc::new(HttpTransport::new(&config.base_url, std::env::var(API_KEY_ENV).ok(), config.timeout))),
        };
        Self::new(config, transport)
    }

    fn assemble(config: LlmConfig, transport: Option<Arc<dyn Transport>>, fixture: Option<ReplayStore>) -> Result<Self, LlmError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| LlmError::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            transport,
            fixture: fixture.map(RwLock::new),
            ledger: Mutex::new(Vec::new()),
            pool,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn backend(&self) -> BackendKind {
        self.config.backend
    }

    /// Sends one prompt and records the exchange.
    pub fn complete(&self, stage: Stage, prompt: &RenderedPrompt) -> Result<ChatExchange, LlmError> {
        if prompt.text.trim().is_empty() {
            return Err(LlmError::EmptyPrompt { stage });
        }
        let exchange = match self.config.backend {
            BackendKind::Replay => self.replay(stage, &prompt.text)?,
            BackendKind::Live => self.call_live(stage, prompt)?,
            BackendKind::Record => {
                let exchange = self.call_live(stage, prompt)?;
                self.fixture.as_ref().expect("record has a fixture").write().expect("fixture lock").insert(exchange.clone());
                exchange
            }
        };
        self.ledger.lock().expect("ledger lock").push(exchange.clone());
        Ok(exchange)
    }

    fn replay(&self, stage: Stage, prompt: &str) -> Result<ChatExchange, LlmError> {
        let store = self.fixture.as_ref().expect("replay has a fixture").read().expect("fixture lock");
        let digest = prompt_digest(prompt);
        let mut exchange = store.get(&digest).cloned().ok_or(LlmError::ReplayMiss { stage, digest })?;
        exchange.stage = stage;
        Ok(exchange)
    }

    /// Every attempt is sent; a failed attempt's latency is charged to the
    /// exchange that finally succeeds.
    fn call_live(&self, stage: Stage, prompt: &RenderedPrompt) -> Result<ChatExchange, LlmError> {
        let transport = self.transport.as_ref().expect("live backend has a transport");
        let request = ChatRequest { model: &self.config.model, prompt: &prompt.text, temperature: self.config.temperature };
        let started = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.retry_backoff.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("{stage}: retrying after error: {last_error}");
                std::thread::sleep(wait);
            }
            match transport.chat(&request) {
                Ok(completion) => {
                    let elapsed_ms = completion.elapsed_ms.unwrap_or_else(|| started.elapsed().as_millis() as u64);
                    return Ok(ChatExchange {
                        stage,
                        template: prompt.template.clone(),
                        prompt: prompt.text.clone(),
                        response: completion.text,
                        prompt_tokens: completion.prompt_tokens,
                        completion_tokens: completion.completion_tokens,
                        elapsed_ms,
                    });
                }
                Err(e) => last_error = e.0,
            }
        }
        Err(LlmError::Transport { stage, attempts, message: last_error })
    }

    /// Writes the record-mode fixture back to disk. No-op for other backends.
    pub fn save_fixture(&self) -> Result<(), LlmError> {
        if self.config.backend != BackendKind::Record {
            return Ok(());
        }
        let path = self.config.fixture.as_ref().expect("record has a fixture path");
        self.fixture.as_ref().expect("record has a fixture").read().expect("fixture lock").save(path)
    }

    /// Snapshot of the ledger. Under replay the wall clock is simulated as
    /// the sum of the recorded latencies so replayed ledgers are reproducible.
    pub fn ledger(&self) -> UsageLedger {
        let exchanges = self.ledger.lock().expect("ledger lock").clone();
        let wall_clock_ms = match self.config.backend {
            BackendKind::Replay => exchanges.iter().map(|e| e.elapsed_ms).sum(),
            _ => self.started.elapsed().as_millis() as u64,
        };
        UsageLedger::new(exchanges, wall_clock_ms)
    }

    /// Order-preserving parallel map bounded by the configured parallelism.
    pub fn map_parallel<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}
