//! FlowDroid results -> leak knowledge graph.
//!
//! Each `<Result>` becomes one [`FlowRecord`], and each record is classified
//! into a single leak triple:
//!
//! * actor: the third party owning the sink's package (SDK prefix table),
//!   otherwise the first party;
//! * action: `share` for network/IPC/SMS sinks, otherwise `collect`;
//! * data: the first source whose API maps onto the taxonomy.
//!
//! With a model attached, the model's classification is tried first and the
//! rule tables are the fallback whenever its answer does not validate.

mod flowdroid;
mod rules;

use std::collections::HashSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

pub use flowdroid::{parse_flowdroid_str, parse_flowdroid_xml, FlowRecord, FlowSource, MethodSig, ParsedFlows, RecordError};
pub use rules::{RuleTables, SinkClass};
pub(crate) use flowdroid::file_label;

use crate::kg::{Action, Actor, DataMapping, KgError, KgKind, KnowledgeGraph, Provenance, Triple, Vocabulary};
use crate::llm::{LlmClient, LlmError, Stage};
use crate::prompts::{self, PromptCatalog, PromptError};
use crate::text::json_slice;

#[derive(Debug, Error)]
pub enum LeakError {
    #[error("{file}:{line}:{column}: malformed XML: {message}")]
    Xml { file: String, line: u32, column: u32, message: String },
    #[error("{file}: {message}")]
    Structure { file: String, message: String },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("no FlowDroid result files given")]
    NoInputs,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Outcome of classifying one record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlowClass {
    Leak(Triple),
    Unclassifiable { reason: String },
}

#[derive(Deserialize)]
struct ModelTriple {
    actor: String,
    action: String,
    data: String,
}

/// Classification context: rule tables, vocabulary and an optional model.
pub struct Classifier<'a> {
    rules: &'a RuleTables,
    vocab: &'a Vocabulary,
    model: Option<(&'a LlmClient, &'a PromptCatalog)>,
}

impl<'a> Classifier<'a> {
    pub fn rules_only(rules: &'a RuleTables, vocab: &'a Vocabulary) -> Self {
        Self { rules, vocab, model: None }
    }

    pub fn with_model(rules: &'a RuleTables, vocab: &'a Vocabulary, client: &'a LlmClient, catalog: &'a PromptCatalog) -> Self {
        Self { rules, vocab, model: Some((client, catalog)) }
    }

    pub fn client(&self) -> Option<&'a LlmClient> {
        self.model.map(|(c, _)| c)
    }

    fn provenance(rec: &FlowRecord) -> Provenance {
        Provenance::Flow { file: rec.file_name(), record: rec.id }
    }

    /// Pure rule-table classification.
    pub fn classify_by_rules(&self, rec: &FlowRecord) -> FlowClass {
        let data = rec.sources.iter().find_map(|s| {
            let sig = MethodSig::find(&s.statement)?;
            let phrase = self.rules.source_data(&sig)?;
            self.vocab.normalize_data_type(&phrase).ok()?.mapped()
        });
        let Some(data) = data else {
            return FlowClass::Unclassifiable { reason: format!("{}#{}: no source maps to a known data type", rec.file_name(), rec.id) };
        };
        let callee = MethodSig::find(&rec.sink_statement);
        let action = match callee.as_ref().and_then(|s| self.rules.sink_class(s)) {
            Some(class) if class.is_egress() => Action::SHARE,
            _ => Action::COLLECT,
        };
        let owner = MethodSig::find(&rec.sink_method);
        let sdk = owner
            .as_ref()
            .and_then(|s| self.rules.sdk_for_class(&s.class))
            .or_else(|| callee.as_ref().and_then(|s| self.rules.sdk_for_class(&s.class)));
        let actor = sdk.map_or(Actor::FirstParty, Actor::third_party);
        match Triple::new(actor, action, data, Self::provenance(rec)) {
            Ok(t) => FlowClass::Leak(t),
            Err(e) => FlowClass::Unclassifiable { reason: e.to_string() },
        }
    }

    fn classify_by_model(&self, rec: &FlowRecord, client: &LlmClient, catalog: &PromptCatalog) -> Result<Result<Triple, String>, LeakError> {
        let sources = rec
            .sources
            .iter()
            .map(|s| MethodSig::find(&s.statement).map_or_else(|| s.statement.clone(), |sig| sig.to_string()))
            .collect::<Vec<_>>()
            .join("\n");
        let sink = MethodSig::find(&rec.sink_statement).map_or_else(|| rec.sink_statement.clone(), |s| s.to_string());
        let prompt = catalog.render(
            prompts::LEAK_MAP,
            &[("sources", &sources), ("sink", &sink), ("sink_method", &rec.sink_method)],
        )?;
        let reply = client.complete(Stage::LeakMap, &prompt)?.response;
        let parsed: Option<ModelTriple> = json_slice(&reply, '{', '}').and_then(|s| serde_json::from_str(s).ok());
        let Some(m) = parsed else {
            return Ok(Err("unparseable model classification".into()));
        };
        let actor = self.vocab.normalize_actor(&m.actor).ok_or_else(|| format!("bad actor `{}`", m.actor));
        let action = self.vocab.normalize_action(&m.action).ok_or_else(|| format!("bad action `{}`", m.action));
        let data = match self.vocab.normalize_data_type(&m.data) {
            Ok(DataMapping::Mapped(d)) => Ok(d),
            _ => Err(format!("data `{}` not in taxonomy", m.data)),
        };
        Ok((|| {
            let action = action?;
            if action.negated {
                return Err(format!("negated action `{action}` for an observed flow"));
            }
            Triple::new(actor?, action, data?, Self::provenance(rec)).map_err(|e| e.to_string())
        })())
    }

    /// Classifies one record. Leak triples are never negated.
    pub fn classify_flow(&self, rec: &FlowRecord) -> Result<(FlowClass, Option<String>), LeakError> {
        if let Some((client, catalog)) = self.model {
            match self.classify_by_model(rec, client, catalog)? {
                Ok(t) => return Ok((FlowClass::Leak(t), None)),
                Err(why) => {
                    let warning = format!("{}#{}: model classification rejected ({why}); using rule tables", rec.file_name(), rec.id);
                    return Ok((self.classify_by_rules(rec), Some(warning)));
                }
            }
        }
        Ok((self.classify_by_rules(rec), None))
    }
}

/// Per-file outcome of a batch extraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileSummary {
    pub path: PathBuf,
    /// Set when the file could not be parsed at all.
    pub error: Option<String>,
    pub records: usize,
    pub record_errors: Vec<RecordError>,
    pub classified: usize,
    pub unclassifiable: usize,
}

impl FileSummary {
    pub fn parsed(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakExtraction {
    pub kg: KnowledgeGraph,
    pub files: Vec<FileSummary>,
    pub warnings: Vec<String>,
}

impl LeakExtraction {
    pub fn all_failed(&self) -> bool {
        self.files.iter().all(|f| !f.parsed())
    }
}

/// Parses every file, keeping going past files that fail.
pub fn parse_all(paths: &[PathBuf]) -> Vec<Result<ParsedFlows, LeakError>> {
    paths.par_iter().map(|p| parse_flowdroid_xml(p)).collect()
}

/// Builds the leak graph over all files, ordered by (file, record).
pub fn extract_leak_kg(paths: &[PathBuf], classifier: &Classifier<'_>) -> Result<LeakExtraction, LeakError> {
    if paths.is_empty() {
        return Err(LeakError::NoInputs);
    }
    let mut warnings = Vec::new();
    let mut names = HashSet::new();
    for p in paths {
        if !names.insert(flowdroid::file_label(p)) {
            warnings.push(format!("{}: file name repeats an earlier input; provenance will be ambiguous", p.display()));
        }
    }

    let parsed = parse_all(paths);
    let mut files = Vec::with_capacity(paths.len());
    let mut records: Vec<&FlowRecord> = Vec::new();
    let mut per_file: Vec<usize> = Vec::with_capacity(paths.len());
    for (path, result) in paths.iter().zip(&parsed) {
        match result {
            Ok(flows) => {
                for e in &flows.errors {
                    warnings.push(format!("{}: {e}", path.display()));
                }
                records.extend(flows.records.iter());
                per_file.push(flows.records.len());
                files.push(FileSummary {
                    path: path.clone(),
                    error: None,
                    records: flows.records.len(),
                    record_errors: flows.errors.clone(),
                    classified: 0,
                    unclassifiable: 0,
                });
            }
            Err(e) => {
                warnings.push(e.to_string());
                per_file.push(0);
                files.push(FileSummary {
                    path: path.clone(),
                    error: Some(e.to_string()),
                    records: 0,
                    record_errors: Vec::new(),
                    classified: 0,
                    unclassifiable: 0,
                });
            }
        }
    }

    let classes: Vec<Result<(FlowClass, Option<String>), LeakError>> = match classifier.client() {
        Some(client) => client.map_parallel(&records, |r| classifier.classify_flow(r)),
        None => records.iter().map(|r| classifier.classify_flow(r)).collect(),
    };

    let mut kg = KnowledgeGraph::new(KgKind::LeakKG);
    let mut cursor = classes.into_iter();
    for (summary, count) in files.iter_mut().zip(per_file) {
        for class in cursor.by_ref().take(count) {
            let (class, warning) = class?;
            warnings.extend(warning);
            match class {
                FlowClass::Leak(t) => {
                    summary.classified += 1;
                    kg.insert(t)?;
                }
                FlowClass::Unclassifiable { reason } => {
                    summary.unclassifiable += 1;
                    warnings.push(format!("unclassifiable flow dropped: {reason}"));
                }
            }
        }
    }
    for w in &warnings {
        log::debug!("{w}");
    }
    Ok(LeakExtraction { kg, files, warnings })
}
