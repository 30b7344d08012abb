//! Privacy policy -> policy knowledge graph.
//!
//! The document is split into sentences, each sentence is sent to the model
//! for raw `(actor, action, data)` candidates, and the candidates are mapped
//! onto the controlled vocabularies. Provenance is the sentence index.

use std::ops::Range;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::kg::{DataMapping, KgError, KgKind, KnowledgeGraph, Provenance, Triple, Vocabulary};
use crate::llm::{LlmClient, LlmError, Stage};
use crate::prompts::{self, PromptCatalog, PromptError};
use crate::text::{has_negation_cue, json_slice};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy document is empty")]
    EmptyDocument,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// One sentence of the policy. `span` is a byte range into the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySegment {
    pub index: usize,
    pub text: String,
    pub span: Range<usize>,
}

const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "inc.", "ltd.", "co.", "corp.", "mr.", "mrs.", "ms.", "dr.", "vs.", "no.", "u.s."];

fn is_abbreviation(doc: &str, dot: usize) -> bool {
    let head = &doc[..=dot];
    let token_start = head.rfind(char::is_whitespace).map_or(0, |i| i + 1);
    let token = head[token_start..].trim_start_matches(['(', '"', '\'']).to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '”', '’'];

/// Byte offsets where a sentence ends (exclusive).
fn boundaries(doc: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = doc.char_indices().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let at_end = j == chars.len();
            if (at_end || chars[j].1.is_whitespace()) && !(c == '.' && j == i + 1 && is_abbreviation(doc, at)) {
                cuts.push(if at_end { doc.len() } else { chars[j].0 });
            }
            i = j;
            continue;
        }
        if c == '\n' {
            // A blank line or a bulleted line starts a new segment.
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, ' ' | '\t' | '\r') {
                j += 1;
            }
            if j < chars.len() && (chars[j].1 == '\n' || matches!(chars[j].1, '-' | '*' | '•')) {
                cuts.push(at);
            }
        }
        i += 1;
    }
    cuts
}

/// Deterministic sentence segmentation. Segments are trimmed, non-empty,
/// ordered and together cover every non-whitespace character of `doc`.
pub fn segment_policy(doc: &str) -> Result<Vec<PolicySegment>, PolicyError> {
    if doc.trim().is_empty() {
        return Err(PolicyError::EmptyDocument);
    }
    let mut segments = Vec::new();
    let mut start = 0;
    let mut cuts = boundaries(doc);
    cuts.push(doc.len());
    for end in cuts {
        if end <= start {
            continue;
        }
        let piece = &doc[start..end];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            let s = start + lead;
            segments.push(PolicySegment { index: segments.len(), text: trimmed.to_string(), span: s..s + trimmed.len() });
        }
        start = end;
    }
    Ok(segments)
}

static SCRIPT_STYLE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?is)<(script|style)\b.*?</(script|style)\s*>").unwrap());
static BLOCK_TAG: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)</?(p|div|br|li|ul|ol|h[1-6]|tr|table|section|article|header|footer)\b[^>]*>").unwrap());
static ANY_TAG: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static SPACES: Lazy<Regex> = Lazy::new(|| Regex::new(r"[ \t\r\f]+").unwrap());
static BLANKS: Lazy<Regex> = Lazy::new(|| Regex::new(r"\n(\s*\n)+").unwrap());

/// Removes markup from an HTML policy. Block elements become paragraph
/// breaks; runs of spaces collapse to one.
pub fn strip_html(html: &str) -> String {
    let text = SCRIPT_STYLE.replace_all(html, " ");
    let text = BLOCK_TAG.replace_all(&text, "\n\n");
    let text = ANY_TAG.replace_all(&text, " ");
    let text = text
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&");
    let text = SPACES.replace_all(&text, " ");
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    BLANKS.replace_all(lines.join("\n").trim(), "\n\n").into_owned()
}

/// Raw model output for one practice, before normalization.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct RawCandidate {
    pub actor: String,
    pub action: String,
    pub data: String,
}

/// Parses the strict JSON-array reply. `None` means the reply is malformed.
pub fn parse_candidates(reply: &str) -> Option<Vec<RawCandidate>> {
    let slice = json_slice(reply, '[', ']')?;
    serde_json::from_str(slice).ok()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    pub candidates: Vec<RawCandidate>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyRead {
    pub kg: KnowledgeGraph,
    pub segments: usize,
    pub warnings: Vec<String>,
}

pub struct PolicyReader<'a> {
    client: &'a LlmClient,
    catalog: &'a PromptCatalog,
    vocab: &'a Vocabulary,
}

impl<'a> PolicyReader<'a> {
    pub fn new(client: &'a LlmClient, catalog: &'a PromptCatalog, vocab: &'a Vocabulary) -> Self {
        Self { client, catalog, vocab }
    }

    fn ask(&self, template: &str, values: &[(&str, &str)]) -> Result<String, PolicyError> {
        let prompt = self.catalog.render(template, values)?;
        Ok(self.client.complete(Stage::PolicyRead, &prompt)?.response)
    }

    /// Candidates for one sentence. A malformed reply gets one reformat
    /// request; a sentence with a negation cue whose candidates came back
    /// affirmative is re-asked once with the negation prompt.
    pub fn extract_candidates(&self, segment: &PolicySegment) -> Result<Extraction, PolicyError> {
        let mut out = Extraction::default();
        let reply = self.ask(prompts::POLICY_EXTRACT, &[("segment", &segment.text)])?;
        let candidates = match parse_candidates(&reply) {
            Some(c) => c,
            None => {
                let retry = self.ask(prompts::POLICY_REFORMAT, &[("reply", &reply), ("segment", &segment.text)])?;
                match parse_candidates(&retry) {
                    Some(c) => c,
                    None => {
                        out.warnings.push(format!("segment {}: unparseable model output after reformat retry; no triples", segment.index));
                        return Ok(out);
                    }
                }
            }
        };
        let affirmative = candidates
            .iter()
            .any(|c| self.vocab.normalize_action(&c.action).is_some_and(|a| !a.negated));
        out.candidates = candidates;
        if affirmative && has_negation_cue(&segment.text) {
            let recheck = self.ask(prompts::POLICY_NEGATION, &[("segment", &segment.text)])?;
            match parse_candidates(&recheck) {
                Some(c) => out.candidates = c,
                None => out.warnings.push(format!("segment {}: negation re-check unparseable; keeping first answer", segment.index)),
            }
        }
        Ok(out)
    }

    /// Builds the policy graph. Candidates whose actor, action or data type
    /// cannot be mapped are dropped with a warning.
    pub fn read_policy(&self, doc: &str) -> Result<PolicyRead, PolicyError> {
        let segments = segment_policy(doc)?;
        let extractions = self.client.map_parallel(&segments, |s| self.extract_candidates(s));
        let mut kg = KnowledgeGraph::new(KgKind::PolicyKG);
        let mut warnings = Vec::new();
        for (segment, extraction) in segments.iter().zip(extractions) {
            let extraction = extraction?;
            warnings.extend(extraction.warnings);
            for c in extraction.candidates {
                match self.normalize(&c, segment.index) {
                    Ok(Some(t)) => {
                        kg.insert(t)?;
                    }
                    Ok(None) => {}
                    Err(w) => warnings.push(w),
                }
            }
        }
        for w in &warnings {
            log::debug!("{w}");
        }
        Ok(PolicyRead { kg, segments: segments.len(), warnings })
    }

    fn normalize(&self, c: &RawCandidate, index: usize) -> Result<Option<Triple>, String> {
        let actor = self
            .vocab
            .normalize_actor(&c.actor)
            .ok_or_else(|| format!("segment {index}: unmappable actor `{}`", c.actor))?;
        let action = self
            .vocab
            .normalize_action(&c.action)
            .ok_or_else(|| format!("segment {index}: unmappable action `{}`", c.action))?;
        let data = match self.vocab.normalize_data_type(&c.data) {
            Ok(DataMapping::Mapped(d)) => d,
            Ok(DataMapping::Unmapped(raw)) => return Err(format!("segment {index}: data type `{raw}` is not in the taxonomy; dropped")),
            Err(_) => return Err(format!("segment {index}: empty data type; dropped")),
        };
        Triple::new(actor, action, data, Provenance::Segment { index })
            .map(Some)
            .map_err(|e| format!("segment {index}: {e}"))
    }
}
