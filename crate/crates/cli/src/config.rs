//! Run configuration: an optional TOML file merged with command-line flags.
//!
//! ```toml
//! backend = "replay"            # live | replay | record
//! fixture = "fixtures/replay.json"
//! base_url = "https://api.deepseek.com/v1"
//! model = "deepseek-chat"
//! temperature = 0.0
//! max_retries = 3
//! parallelism = 4
//! timeout_secs = 120
//! prompt_dir = "prompts"        # defaults to the built-in catalog
//! prompt_version = "v1"
//! data_dir = "data"             # defaults to the built-in tables
//! out_dir = "out"
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.
//! The API key is only ever read from the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use policheck_core::llm::{BackendKind, LlmConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub fixture: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_retries: Option<u32>,
    pub parallelism: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub prompt_dir: Option<PathBuf>,
    pub prompt_version: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.fixture, &mut cfg.prompt_dir, &mut cfg.data_dir, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model backend: live, replay or record
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Replay/record fixture file
    #[arg(long, global = true)]
    pub fixture: Option<PathBuf>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
    /// Maximum concurrent model requests
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
    /// Directory of prompt templates (`<name>.<version>.txt`)
    #[arg(long, global = true)]
    pub prompt_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub prompt_version: Option<String>,
    /// Directory holding the taxonomy, synonym and rule tables
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory for outputs without an explicit path
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

/// Effective settings after merging and validation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// `None` when no backend was configured; model-dependent commands refuse to run.
    pub backend: Option<BackendKind>,
    pub llm: LlmConfig,
    pub prompt_dir: Option<PathBuf>,
    pub prompt_version: String,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn resolve(flags: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let backend = match flags.backend.clone().or(file.backend) {
            Some(b) => Some(b.parse::<BackendKind>().map_err(|e| CliError::Usage(e.to_string()))?),
            None => None,
        };
        let defaults = LlmConfig::default();
        let llm = LlmConfig {
            backend: backend.unwrap_or(defaults.backend),
            base_url: flags.base_url.clone().or(file.base_url).unwrap_or(defaults.base_url),
            model: flags.model.clone().or(file.model).unwrap_or(defaults.model),
            temperature: flags.temperature.or(file.temperature).unwrap_or(defaults.temperature),
            max_retries: flags.max_retries.or(file.max_retries).unwrap_or(defaults.max_retries),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(defaults.parallelism),
            fixture: flags.fixture.clone().or(file.fixture),
            timeout: flags.timeout_secs.or(file.timeout_secs).map_or(defaults.timeout, Duration::from_secs),
            retry_backoff: defaults.retry_backoff,
        };
        let cfg = Self {
            backend,
            llm,
            prompt_dir: flags.prompt_dir.clone().or(file.prompt_dir),
            prompt_version: flags
                .prompt_version
                .clone()
                .or(file.prompt_version)
                .unwrap_or_else(|| policheck_core::prompts::DEFAULT_VERSION.to_string()),
            data_dir: flags.data_dir.clone().or(file.data_dir),
            out_dir: flags.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.llm.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return Err(CliError::Usage(format!("temperature {} is outside 0..=2", self.llm.temperature)));
        }
        for (what, dir) in [("prompt directory", &self.prompt_dir), ("data directory", &self.data_dir)] {
            if let Some(d) = dir {
                if !d.is_dir() {
                    return Err(CliError::Usage(format!("{what} not found: {}", d.display())));
                }
            }
        }
        match (self.backend, &self.llm.fixture) {
            (Some(BackendKind::Replay), None) | (Some(BackendKind::Record), None) => {
                Err(CliError::Usage("replay and record backends need --fixture".into()))
            }
            (Some(BackendKind::Replay), Some(f)) if !f.is_file() => {
                Err(CliError::Usage(format!("fixture file not found: {}", f.display())))
            }
            _ => Ok(()),
        }
    }
}
