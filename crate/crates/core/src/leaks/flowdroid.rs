//! FlowDroid result XML.
//!
//! Only the parts shared by all serializer versions are read:
//!
//! ```xml
//! <DataFlowResults FileFormatVersion="102">
//!   <Results>
//!     <Result>
//!       <Sink Statement="..." Method="..."/>
//!       <Sources>
//!         <Source Statement="..." Method="..."/>
//!       </Sources>
//!     </Result>
//!   </Results>
//! </DataFlowResults>
//! ```
//!
//! Everything else (access paths, taint paths, performance data) is ignored.

use std::fmt;
use std::path::{Path, PathBuf};

use once_cell::sync::Lazy;
use regex::Regex;
use roxmltree::{Document, Node};

use super::LeakError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowSource {
    pub statement: String,
    pub method: String,
}

/// One `<Result>`: a sink reached by one or more sources.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowRecord {
    /// Ordinal of the `<Result>` element in its file.
    pub id: usize,
    pub sink_statement: String,
    /// Method containing the sink statement.
    pub sink_method: String,
    pub sources: Vec<FlowSource>,
    pub source_file: PathBuf,
}

impl FlowRecord {
    /// File name used in provenance.
    pub fn file_name(&self) -> String {
        file_label(&self.source_file)
    }
}

pub(crate) fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// A `<Result>` that could not be turned into a record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordError {
    pub index: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "result #{}: {}", self.index, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedFlows {
    pub records: Vec<FlowRecord>,
    pub errors: Vec<RecordError>,
    pub format_version: Option<String>,
}

fn child<'a, 'input>(node: Node<'a, 'input>, name: &str) -> Option<Node<'a, 'input>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn required_attr(node: Node<'_, '_>, name: &str) -> Result<String, String> {
    match node.attribute(name).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v.to_string()),
        _ => Err(format!("<{}> lacks a non-empty {name} attribute", node.tag_name().name())),
    }
}

fn parse_result(node: Node<'_, '_>, id: usize, file: &Path) -> Result<FlowRecord, String> {
    let sink = child(node, "Sink").ok_or("missing <Sink>")?;
    let sink_statement = required_attr(sink, "Statement")?;
    let sink_method = required_attr(sink, "Method")?;
    let sources_node = child(node, "Sources").ok_or("missing <Sources>")?;
    let sources = sources_node
        .children()
        .filter(|n| n.has_tag_name("Source"))
        .map(|s| Ok(FlowSource { statement: required_attr(s, "Statement")?, method: required_attr(s, "Method")? }))
        .collect::<Result<Vec<_>, String>>()?;
    if sources.is_empty() {
        return Err("<Sources> has no <Source>".into());
    }
    Ok(FlowRecord { id, sink_statement, sink_method, sources, source_file: file.to_path_buf() })
}

/// Parses result XML held in memory. `file` is recorded on every record.
pub fn parse_flowdroid_str(xml: &str, file: &Path) -> Result<ParsedFlows, LeakError> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        LeakError::Xml { file: file.display().to_string(), line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let root = doc.root_element();
    let results = match root.tag_name().name() {
        "Results" => Some(root),
        "DataFlowResults" => child(root, "Results"),
        other => {
            return Err(LeakError::Structure {
                file: file.display().to_string(),
                message: format!("unexpected root element <{other}>"),
            })
        }
    };
    let format_version = root.attribute("FileFormatVersion").map(str::to_string);
    if let Some(v) = &format_version {
        log::info!("{}: FlowDroid file format version {v}", file.display());
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    if let Some(results) = results {
        for (index, node) in results.children().filter(|n| n.has_tag_name("Result")).enumerate() {
            match parse_result(node, index, file) {
                Ok(r) => records.push(r),
                Err(message) => errors.push(RecordError { index, message }),
            }
        }
    }
    Ok(ParsedFlows { records, errors, format_version })
}

pub fn parse_flowdroid_xml(path: &Path) -> Result<ParsedFlows, LeakError> {
    let xml = std::fs::read_to_string(path).map_err(|e| LeakError::Io(path.display().to_string(), e))?;
    parse_flowdroid_str(&xml, path)
}

/// A Soot method or field signature, `<class: type name(params)>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MethodSig {
    pub class: String,
    pub ret: String,
    pub name: String,
    /// `None` for field references.
    pub params: Option<String>,
}

static METHOD_SIG: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"<([\w.$]+):\s+([\w.$\[\]]+)\s+(<?[\w$]+>?)\(([^)]*)\)>").unwrap());
static FIELD_SIG: Lazy<Regex> = Lazy::new(|| Regex::new(r"<([\w.$]+):\s+([\w.$\[\]]+)\s+([\w$]+)>").unwrap());

impl MethodSig {
    /// First signature mentioned in a Jimple statement or method string.
    pub fn find(text: &str) -> Option<Self> {
        if let Some(c) = METHOD_SIG.captures(text) {
            return Some(Self { class: c[1].into(), ret: c[2].into(), name: c[3].into(), params: Some(c[4].into()) });
        }
        FIELD_SIG
            .captures(text)
            .map(|c| Self { class: c[1].into(), ret: c[2].into(), name: c[3].into(), params: None })
    }

    /// `class:name`, the key used by the rule tables.
    pub fn key(&self) -> String {
        format!("{}:{}", self.class, self.name)
    }

    /// `class.name`, the dotted form used when matching model output.
    pub fn dotted(&self) -> String {
        format!("{}.{}", self.class, self.name)
    }
}

impl fmt::Display for MethodSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.params {
            Some(p) => write!(f, "<{}: {} {}({})>", self.class, self.ret, self.name, p),
            None => write!(f, "<{}: {} {}>", self.class, self.ret, self.name),
        }
    }
}
