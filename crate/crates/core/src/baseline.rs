//! Model-only comparison pipeline.
//!
//! Stage 1 asks the model to summarize each FlowDroid file (in chunks), stage 2
//! asks it to pick out the privacy-relevant methods from that summary, and stage
//! 3 asks it to judge each method against the full policy text. Judgments are
//! then mapped back onto FlowDroid records so both pipelines are scored over
//! the same units.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::leaks::{file_label, parse_flowdroid_xml, FlowRecord, MethodSig};
use crate::llm::{LlmClient, LlmError, Stage};
use crate::prompts::{self, PromptCatalog, PromptError};
use crate::text::json_slice;
use crate::verdict_file::{FlowRef, RecordedOutcome, VerdictFile, VerdictRecord};

pub const DEFAULT_CHUNK_CHARS: usize = 12_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no FlowDroid files given")]
    NoInputs,
    #[error("policy document is empty")]
    EmptyPolicy,
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityJudgment {
    pub method: String,
    /// Text the model quoted from the policy, if any.
    pub policy_excerpt: String,
    pub consistent: bool,
    pub rationale: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stage2Output {
    pub methods: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stage3Output {
    pub judgments: Vec<SimilarityJudgment>,
    pub warnings: Vec<String>,
}

/// Splits `text` into pieces of at most `max` bytes, on line boundaries where
/// possible.
pub fn chunk_text(text: &str, max: usize) -> Vec<&str> {
    let max = max.max(1);
    let mut chunks = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        if rest.len() <= max {
            chunks.push(rest);
            break;
        }
        let mut cut = rest[..=max].rfind('\n').map(|i| i + 1).filter(|&i| i <= max).unwrap_or(0);
        if cut == 0 {
            cut = max;
            while !rest.is_char_boundary(cut) {
                cut -= 1;
            }
            if cut == 0 {
                cut = rest.chars().next().map_or(rest.len(), char::len_utf8);
            }
        }
        chunks.push(&rest[..cut]);
        rest = &rest[cut..];
    }
    chunks
}

static VERDICT_LINE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?im)^\W*verdict\W*:\W*(consistent|inconsistent)\b").unwrap());
static QUOTED: Lazy<Regex> = Lazy::new(|| Regex::new(r#""([^"\n]{8,})"|“([^”\n]{8,})”"#).unwrap());

/// The last `VERDICT:` line of a stage-3 answer; `Some(true)` for consistent.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    VERDICT_LINE
        .captures_iter(reply)
        .last()
        .map(|c| c[1].eq_ignore_ascii_case("consistent"))
}

fn parse_method_list(reply: &str) -> Option<Vec<String>> {
    let slice = json_slice(reply, '[', ']')?;
    serde_json::from_str::<Vec<String>>(slice).ok()
}

/// Normalized method identity, `class.name`, used to link model answers back
/// to FlowDroid records.
pub fn method_key(text: &str) -> String {
    if let Some(sig) = MethodSig::find(text) {
        return sig.dotted();
    }
    let t = text.trim().trim_matches(|c| c == '<' || c == '>' || c == '`');
    let t = t.split('(').next().unwrap_or(t).trim();
    // `class: ret name` without parameters
    if let Some((class, rest)) = t.split_once(':') {
        if let Some(name) = rest.split_whitespace().last() {
            return format!("{}.{}", class.trim(), name);
        }
    }
    t.rsplit(char::is_whitespace).next().unwrap_or(t).to_string()
}

/// Method keys a record mentions: the method containing the sink, the sink
/// callee, and the source methods and callees.
pub fn record_method_keys(rec: &FlowRecord) -> HashSet<String> {
    let mut keys = HashSet::new();
    for text in [&rec.sink_method, &rec.sink_statement] {
        if let Some(sig) = MethodSig::find(text) {
            keys.insert(sig.dotted());
        }
    }
    for src in &rec.sources {
        for text in [&src.method, &src.statement] {
            if let Some(sig) = MethodSig::find(text) {
                keys.insert(sig.dotted());
            }
        }
    }
    keys
}

pub struct Baseline<'a> {
    client: &'a LlmClient,
    catalog: &'a PromptCatalog,
    chunk_chars: usize,
}

impl<'a> Baseline<'a> {
    pub fn new(client: &'a LlmClient, catalog: &'a PromptCatalog) -> Self {
        Self { client, catalog, chunk_chars: DEFAULT_CHUNK_CHARS }
    }

    pub fn with_chunk_chars(mut self, chunk_chars: usize) -> Self {
        self.chunk_chars = chunk_chars.max(1);
        self
    }

    /// One model exchange per chunk of raw XML; summaries are concatenated
    /// per file in input order.
    pub fn stage1(&self, paths: &[PathBuf]) -> Result<String, BaselineError> {
        if paths.is_empty() {
            return Err(BaselineError::NoInputs);
        }
        let mut jobs = Vec::new();
        for (file_idx, path) in paths.iter().enumerate() {
            let xml = std::fs::read_to_string(path).map_err(|e| BaselineError::Io(path.display().to_string(), e))?;
            for chunk in chunk_text(&xml, self.chunk_chars) {
                jobs.push((file_idx, chunk.to_string()));
            }
        }
        let answers = self.client.map_parallel(&jobs, |(_, chunk)| {
            let prompt = self.catalog.render(prompts::BASELINE_FLOWS, &[("xml", chunk)])?;
            Ok::<_, BaselineError>(self.client.complete(Stage::BaselineStage1, &prompt)?.response)
        });
        let mut summary = String::new();
        let mut current = None;
        for ((file_idx, _), answer) in jobs.iter().zip(answers) {
            let answer = answer?;
            if current != Some(*file_idx) {
                if !summary.is_empty() {
                    summary.push('\n');
                }
                summary.push_str(&format!("File {}:\n", file_label(&paths[*file_idx])));
                current = Some(*file_idx);
            }
            summary.push_str(answer.trim());
            summary.push('\n');
        }
        Ok(summary)
    }

    /// Privacy-relevant methods named in the summary, deduplicated in answer
    /// order. A malformed answer gets one reformat request, then `[]`.
    pub fn stage2(&self, summary: &str) -> Result<Stage2Output, BaselineError> {
        if summary.trim().is_empty() {
            return Ok(Stage2Output::default());
        }
        let prompt = self.catalog.render(prompts::BASELINE_METHODS, &[("summary", summary)])?;
        let first = self.client.complete(Stage::BaselineStage2, &prompt)?.response;
        let mut out = Stage2Output::default();
        let methods = match parse_method_list(&first) {
            Some(m) => m,
            None => {
                let retry = self
                    .catalog
                    .render(prompts::BASELINE_METHODS_REFORMAT, &[("reply", &first), ("summary", summary)])?;
                let second = self.client.complete(Stage::BaselineStage2, &retry)?.response;
                parse_method_list(&second).unwrap_or_else(|| {
                    out.warnings.push("method list could not be parsed after one reformat request; using []".into());
                    Vec::new()
                })
            }
        };
        let mut seen = HashSet::new();
        out.methods = methods
            .into_iter()
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty() && seen.insert(m.clone()))
            .collect();
        Ok(out)
    }

    /// One judgment per method, in method order. Answers without a verdict
    /// line are dropped with a warning.
    pub fn stage3(&self, methods: &[String], summary: &str, policy: &str) -> Result<Stage3Output, BaselineError> {
        if policy.trim().is_empty() {
            return Err(BaselineError::EmptyPolicy);
        }
        let answers = self.client.map_parallel(methods, |method| {
            let prompt = self
                .catalog
                .render(prompts::BASELINE_JUDGE, &[("method", method), ("summary", summary), ("policy", policy)])?;
            Ok::<_, BaselineError>(self.client.complete(Stage::BaselineStage3, &prompt)?.response)
        });
        let mut out = Stage3Output::default();
        for (method, answer) in methods.iter().zip(answers) {
            let answer = answer?;
            match parse_verdict(&answer) {
                Some(consistent) => {
                    let policy_excerpt = QUOTED
                        .captures(&answer)
                        .and_then(|c| c.get(1).or_else(|| c.get(2)))
                        .map_or_else(String::new, |m| m.as_str().to_string());
                    let rationale = VERDICT_LINE.replace_all(&answer, "").trim().to_string();
                    out.judgments.push(SimilarityJudgment { method: method.clone(), policy_excerpt, consistent, rationale });
                }
                None => out.warnings.push(format!("{method}: answer has no VERDICT line; not judged")),
            }
        }
        Ok(out)
    }
}

/// Maps judgments onto records. A record is a violation if any judged method
/// it mentions was judged inconsistent; records with no judged method are not
/// flagged.
pub fn aggregate(records: &[FlowRecord], judgments: &[SimilarityJudgment]) -> Vec<VerdictRecord> {
    let keyed: Vec<(String, &SimilarityJudgment)> = judgments.iter().map(|j| (method_key(&j.method), j)).collect();
    records
        .iter()
        .map(|rec| {
            let keys = record_method_keys(rec);
            let hit = keyed.iter().find(|(k, j)| !j.consistent && keys.contains(k)).map(|(_, j)| *j);
            VerdictRecord {
                flow: FlowRef { file: rec.file_name(), record: rec.id },
                outcome: if hit.is_some() { RecordedOutcome::Inconsistent } else { RecordedOutcome::Consistent },
                violation: hit.is_some(),
                leak: None,
                matched_policy: None,
                rationale: hit.map(|j| format!("{}: {}", j.method, j.rationale)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineRun {
    pub summary: String,
    pub methods: Vec<String>,
    pub judgments: Vec<SimilarityJudgment>,
    pub verdicts: VerdictFile,
    pub warnings: Vec<String>,
}

/// Runs all three stages and produces per-record verdicts. Files FlowDroid
/// records cannot be read from still go to the model as raw text.
pub fn run_baseline(baseline: &Baseline<'_>, paths: &[PathBuf], policy: &str) -> Result<BaselineRun, BaselineError> {
    if policy.trim().is_empty() {
        return Err(BaselineError::EmptyPolicy);
    }
    let summary = baseline.stage1(paths)?;
    let stage2 = baseline.stage2(&summary)?;
    let stage3 = baseline.stage3(&stage2.methods, &summary, policy)?;
    let mut warnings = stage2.warnings;
    warnings.extend(stage3.warnings);
    let mut records = Vec::new();
    for path in paths {
        match parse_flowdroid_xml(path) {
            Ok(parsed) => records.extend(parsed.records),
            Err(e) => warnings.push(format!("{}: no records to score ({e})", display(path))),
        }
    }
    let verdicts = VerdictFile::new("baseline", aggregate(&records, &stage3.judgments));
    Ok(BaselineRun { summary, methods: stage2.methods, judgments: stage3.judgments, verdicts, warnings })
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaks::FlowSource;

    #[test]
    fn chunks_cover_the_text_and_respect_the_limit() {
        let text = "line one\nline two\nline three\n";
        let chunks = chunk_text(text, 12);
        assert_eq!(chunks.concat(), text);
        assert!(chunks.iter().all(|c| c.len() <= 12));
        assert_eq!(chunks[0], "line one\n");
        let long = "x".repeat(25);
        assert_eq!(chunk_text(&long, 10).len(), 3);
        assert!(chunk_text("", 10).is_empty());
        let multibyte = "ééééé";
        assert_eq!(chunk_text(multibyte, 3).concat(), multibyte);
    }

    #[test]
    fn verdict_lines() {
        assert_eq!(parse_verdict("Reasoning...\nVERDICT: INCONSISTENT"), Some(false));
        assert_eq!(parse_verdict("verdict: consistent\n"), Some(true));
        assert_eq!(parse_verdict("**VERDICT:** CONSISTENT"), Some(true));
        assert_eq!(parse_verdict("It is inconsistent."), None);
        assert_eq!(parse_verdict("VERDICT: CONSISTENT\nwait\nVERDICT: INCONSISTENT"), Some(false));
    }

    #[test]
    fn method_keys() {
        assert_eq!(method_key("<com.ex.Net: void send(java.lang.String)>"), "com.ex.Net.send");
        assert_eq!(method_key("com.ex.Net.send(java.lang.String)"), "com.ex.Net.send");
        assert_eq!(method_key("com.ex.Net: void send"), "com.ex.Net.send");
        assert_eq!(method_key("  com.ex.Net.send  "), "com.ex.Net.send");
    }

    #[test]
    fn aggregation_flags_records_with_an_inconsistent_method() {
        let rec = |id, sink_method: &str| FlowRecord {
            id,
            sink_statement: "virtualinvoke $r1.<java.io.OutputStream: void write(byte[])>($r2)".into(),
            sink_method: sink_method.into(),
            sources: vec![FlowSource { statement: "s".into(), method: "<com.ex.Main: void onCreate()>".into() }],
            source_file: "app.xml".into(),
        };
        let records = vec![rec(0, "<com.ex.Net: void send()>"), rec(1, "<com.ex.Log: void save()>"), rec(2, "<com.ex.Other: void x()>")];
        let judgment = |m: &str, consistent| SimilarityJudgment { method: m.into(), policy_excerpt: String::new(), consistent, rationale: "r".into() };
        let verdicts = aggregate(&records, &[judgment("<com.ex.Net: void send()>", false), judgment("com.ex.Log.save", true)]);
        assert_eq!(verdicts.iter().map(|v| v.violation).collect::<Vec<_>>(), [true, false, false]);
        assert_eq!(verdicts[0].outcome, RecordedOutcome::Inconsistent);
        assert_eq!(verdicts[2].flow, FlowRef { file: "app.xml".into(), record: 2 });
    }
}
